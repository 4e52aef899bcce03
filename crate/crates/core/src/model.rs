//! Trace data model: event taxonomy, priority tiers, resource vectors and
//! the four record types.

use std::fmt;
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use crate::error::ModelError;

/// Microseconds since the trace epoch.
pub type Micros = u64;

pub const MICROS_PER_SECOND: Micros = 1_000_000;
pub const SECONDS_PER_DAY: u64 = 86_400;
pub const MICROS_PER_DAY: Micros = SECONDS_PER_DAY * MICROS_PER_SECOND;

/// Timestamp marking an event that happened before the trace window opened.
pub const BEFORE_TRACE: Micros = 0;
/// Timestamp marking an event that happened after the trace window closed.
pub const AFTER_TRACE: Micros = u64::MAX;

/// Returns true for the two timestamp sentinels. Sentinel-timed events are
/// counted but never take part in duration arithmetic.
#[inline]
pub fn is_sentinel(t: Micros) -> bool {
    t == BEFORE_TRACE || t == AFTER_TRACE
}

pub fn micros_to_seconds(us: Micros) -> f64 {
    us as f64 / MICROS_PER_SECOND as f64
}

macro_rules! coded_enum {
    (
        $(#[$meta:meta])*
        pub enum $name:ident { $($variant:ident = $code:literal => $label:literal),+ $(,)? }
    ) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $label)] $variant = $code),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            /// Stable on-disk integer code.
            pub fn code(self) -> u8 {
                self as u8
            }

            pub fn from_code(code: u64) -> Option<Self> {
                match code {
                    $($code => Some($name::$variant),)+
                    _ => None,
                }
            }

            pub fn name(self) -> &'static str {
                match self {
                    $($name::$variant => $label),+
                }
            }

            pub fn from_name(name: &str) -> Option<Self> {
                match name {
                    $($label => Some($name::$variant),)+
                    _ => None,
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }
    };
}

coded_enum! {
    /// Scheduler lifecycle event, shared by collections and instances.
    pub enum EventType {
        Submit = 0 => "SUBMIT",
        Queue = 1 => "QUEUE",
        Enable = 2 => "ENABLE",
        Schedule = 3 => "SCHEDULE",
        Evict = 4 => "EVICT",
        Fail = 5 => "FAIL",
        Finish = 6 => "FINISH",
        Kill = 7 => "KILL",
        Lost = 8 => "LOST",
        UpdatePending = 9 => "UPDATE_PENDING",
        UpdateRunning = 10 => "UPDATE_RUNNING",
    }
}

impl EventType {
    /// EVICT, FAIL, FINISH and KILL end a lifecycle.
    pub fn is_terminal(self) -> bool {
        matches!(
            self,
            EventType::Evict | EventType::Fail | EventType::Finish | EventType::Kill
        )
    }

    /// States whose residence time is measured: the gap from this event to
    /// the next one is attributed to it. LOST is neither terminal nor
    /// duration-bearing.
    pub fn is_duration_bearing(self) -> bool {
        matches!(
            self,
            EventType::Submit
                | EventType::Queue
                | EventType::Enable
                | EventType::Schedule
                | EventType::UpdatePending
                | EventType::UpdateRunning
        )
    }

    pub fn duration_bearing() -> impl Iterator<Item = EventType> {
        EventType::ALL.iter().copied().filter(|e| e.is_duration_bearing())
    }
}

/// Standalone form of [`EventType::is_terminal`].
pub fn is_terminal(event_type: EventType) -> bool {
    event_type.is_terminal()
}

coded_enum! {
    pub enum CollectionType {
        Job = 0 => "JOB",
        AllocSet = 1 => "ALLOC_SET",
    }
}

coded_enum! {
    pub enum InstanceType {
        Task = 0 => "TASK",
        AllocInstance = 1 => "ALLOC_INSTANCE",
    }
}

coded_enum! {
    pub enum MachineEventType {
        Add = 0 => "ADD",
        Remove = 1 => "REMOVE",
        Update = 2 => "UPDATE",
    }
}

coded_enum! {
    pub enum VerticalScaling {
        SettingUnknown = 0 => "SETTING_UNKNOWN",
        Off = 1 => "OFF",
        UserConstrained = 2 => "USER_CONSTRAINED",
        FullyAutomated = 3 => "FULLY_AUTOMATED",
    }
}

coded_enum! {
    /// Coarse priority classes, ordered from least to most preferred.
    pub enum PriorityTier {
        Free = 0 => "FREE",
        BestEffortBatch = 1 => "BEST_EFFORT_BATCH",
        Mid = 2 => "MID",
        Production = 3 => "PRODUCTION",
        Monitoring = 4 => "MONITORING",
    }
}

impl PriorityTier {
    pub fn index(self) -> usize {
        self as usize
    }
}

/// Four ascending cut points; cut point `i` is the lowest priority of tier
/// `i + 1`. Priorities below the first cut point are FREE.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "[i32; 4]", into = "[i32; 4]")]
pub struct TierBoundaries([i32; 4]);

impl TierBoundaries {
    pub fn new(cuts: [i32; 4]) -> Result<Self, ModelError> {
        if cuts.windows(2).all(|w| w[0] < w[1]) {
            Ok(TierBoundaries(cuts))
        } else {
            Err(ModelError::TierBoundaries(cuts))
        }
    }

    pub fn cuts(&self) -> [i32; 4] {
        self.0
    }

    pub fn classify(&self, priority: i32) -> PriorityTier {
        let idx = self.0.iter().take_while(|&&c| c <= priority).count();
        PriorityTier::ALL[idx]
    }

    /// Half-open priority interval `[lo, hi)` covered by `tier`; `None` means
    /// unbounded on that side.
    pub fn interval(&self, tier: PriorityTier) -> (Option<i32>, Option<i32>) {
        let i = tier.index();
        let lo = if i == 0 { None } else { Some(self.0[i - 1]) };
        let hi = if i == 4 { None } else { Some(self.0[i]) };
        (lo, hi)
    }
}

impl Default for TierBoundaries {
    /// FREE ≤ 99, BEST_EFFORT_BATCH 100–115, MID 116–119,
    /// PRODUCTION 120–359, MONITORING ≥ 360.
    fn default() -> Self {
        TierBoundaries([100, 116, 120, 360])
    }
}

impl TryFrom<[i32; 4]> for TierBoundaries {
    type Error = ModelError;

    fn try_from(cuts: [i32; 4]) -> Result<Self, Self::Error> {
        TierBoundaries::new(cuts)
    }
}

impl From<TierBoundaries> for [i32; 4] {
    fn from(b: TierBoundaries) -> Self {
        b.0
    }
}

pub fn classify_priority_tier(priority: i32, boundaries: &TierBoundaries) -> PriorityTier {
    boundaries.classify(priority)
}

coded_enum! {
    /// Tasks-per-job bins.
    pub enum JobSizeBin {
        One = 0 => "1",
        UpTo10 = 1 => "2-10",
        UpTo100 = 2 => "11-100",
        UpTo1000 = 3 => "101-1000",
        UpTo2000 = 4 => "1001-2000",
        Over2000 = 5 => ">2000",
    }
}

impl JobSizeBin {
    /// Inclusive task-count range of the bin; the last bin is open above.
    pub fn range(self) -> (u64, Option<u64>) {
        match self {
            JobSizeBin::One => (1, Some(1)),
            JobSizeBin::UpTo10 => (2, Some(10)),
            JobSizeBin::UpTo100 => (11, Some(100)),
            JobSizeBin::UpTo1000 => (101, Some(1000)),
            JobSizeBin::UpTo2000 => (1001, Some(2000)),
            JobSizeBin::Over2000 => (2001, None),
        }
    }
}

pub fn job_size_bin(task_count: u64) -> Result<JobSizeBin, ModelError> {
    Ok(match task_count {
        0 => return Err(ModelError::EmptyJob),
        1 => JobSizeBin::One,
        2..=10 => JobSizeBin::UpTo10,
        11..=100 => JobSizeBin::UpTo100,
        101..=1000 => JobSizeBin::UpTo1000,
        1001..=2000 => JobSizeBin::UpTo2000,
        _ => JobSizeBin::Over2000,
    })
}

/// Normalized CPU and memory pair.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Resources {
    pub cpus: f64,
    pub memory: f64,
}

impl Resources {
    pub const ZERO: Resources = Resources { cpus: 0.0, memory: 0.0 };

    pub fn new(cpus: f64, memory: f64) -> Self {
        Resources { cpus, memory }
    }

    pub fn scale(self, c: f64) -> Self {
        Resources::new(self.cpus * c, self.memory * c)
    }

    pub fn is_valid(&self) -> bool {
        self.cpus.is_finite() && self.memory.is_finite() && self.cpus >= 0.0 && self.memory >= 0.0
    }

    /// True when either component carries the "no limit set" sentinel.
    pub fn has_unlimited_component(&self) -> bool {
        self.cpus == 0.0 || self.memory == 0.0
    }
}

impl Add for Resources {
    type Output = Resources;

    fn add(self, rhs: Resources) -> Resources {
        Resources::new(self.cpus + rhs.cpus, self.memory + rhs.memory)
    }
}

impl AddAssign for Resources {
    fn add_assign(&mut self, rhs: Resources) {
        self.cpus += rhs.cpus;
        self.memory += rhs.memory;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollectionEvent {
    pub time: Micros,
    pub collection_id: u64,
    pub event_type: EventType,
    pub collection_type: CollectionType,
    pub priority: i32,
    pub alloc_collection_id: Option<u64>,
    pub parent_collection_id: Option<u64>,
    pub max_per_machine: Option<u32>,
    pub max_per_switch: Option<u32>,
    pub vertical_scaling: VerticalScaling,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InstanceEvent {
    pub time: Micros,
    pub collection_id: u64,
    pub instance_index: u32,
    pub event_type: EventType,
    pub instance_type: InstanceType,
    pub machine_id: Option<u64>,
    pub priority: i32,
    pub alloc_collection_id: Option<u64>,
    /// A zero component means no limit was set for that resource.
    pub resource_request: Resources,
}

/// Average consumption of one instance over at most one measurement window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UsageRecord {
    pub start_time: Micros,
    pub end_time: Micros,
    pub collection_id: u64,
    pub instance_index: u32,
    pub machine_id: u64,
    pub average_usage: Resources,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MachineEvent {
    pub time: Micros,
    pub machine_id: u64,
    pub event_type: MachineEventType,
    pub capacity: Resources,
}

/// Records that carry a single event timestamp.
pub trait Timed {
    fn time(&self) -> Micros;
}

impl Timed for CollectionEvent {
    fn time(&self) -> Micros {
        self.time
    }
}

impl Timed for InstanceEvent {
    fn time(&self) -> Micros {
        self.time
    }
}

impl Timed for MachineEvent {
    fn time(&self) -> Micros {
        self.time
    }
}

impl Timed for UsageRecord {
    fn time(&self) -> Micros {
        self.start_time
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn default_tiers() {
        let b = TierBoundaries::default();
        assert_eq!(b.classify(0), PriorityTier::Free);
        assert_eq!(b.classify(99), PriorityTier::Free);
        assert_eq!(b.classify(100), PriorityTier::BestEffortBatch);
        assert_eq!(b.classify(115), PriorityTier::BestEffortBatch);
        assert_eq!(b.classify(116), PriorityTier::Mid);
        assert_eq!(b.classify(119), PriorityTier::Mid);
        assert_eq!(b.classify(120), PriorityTier::Production);
        assert_eq!(b.classify(359), PriorityTier::Production);
        assert_eq!(b.classify(360), PriorityTier::Monitoring);
        assert_eq!(b.classify(i32::MIN), PriorityTier::Free);
        assert_eq!(b.classify(i32::MAX), PriorityTier::Monitoring);
    }

    #[test]
    fn boundaries_must_ascend() {
        assert!(TierBoundaries::new([1, 2, 2, 3]).is_err());
        assert!(TierBoundaries::new([5, 4, 6, 7]).is_err());
        let parsed: Result<TierBoundaries, _> = serde_json::from_str("[3,2,1,0]");
        assert!(parsed.is_err());
    }

    #[test]
    fn terminal_and_duration_partition() {
        let terminal: Vec<_> = EventType::ALL.iter().filter(|e| e.is_terminal()).collect();
        assert_eq!(terminal.len(), 4);
        assert_eq!(EventType::duration_bearing().count(), 6);
        assert!(is_terminal(EventType::Finish));
        assert!(!is_terminal(EventType::Submit));
        assert!(!is_terminal(EventType::Lost));
        assert!(!EventType::Lost.is_duration_bearing());
        for e in EventType::ALL {
            assert!(!(e.is_terminal() && e.is_duration_bearing()));
        }
    }

    #[test]
    fn codes_are_declaration_order() {
        for (i, e) in EventType::ALL.iter().enumerate() {
            assert_eq!(e.code() as usize, i);
            assert_eq!(EventType::from_code(i as u64), Some(*e));
        }
        assert_eq!(EventType::from_code(11), None);
        assert_eq!(VerticalScaling::from_code(3), Some(VerticalScaling::FullyAutomated));
        assert_eq!(MachineEventType::from_code(2), Some(MachineEventType::Update));
    }

    #[test]
    fn size_bins() {
        assert_eq!(job_size_bin(1).unwrap(), JobSizeBin::One);
        assert_eq!(job_size_bin(7).unwrap(), JobSizeBin::UpTo10);
        assert_eq!(job_size_bin(100).unwrap(), JobSizeBin::UpTo100);
        assert_eq!(job_size_bin(2000).unwrap(), JobSizeBin::UpTo2000);
        assert_eq!(job_size_bin(97_088).unwrap(), JobSizeBin::Over2000);
        assert_eq!(job_size_bin(97_088).unwrap().name(), ">2000");
        assert!(job_size_bin(0).is_err());
    }

    proptest! {
        #[test]
        fn tier_classification_is_monotone(a in any::<i32>(), b in any::<i32>()) {
            let bounds = TierBoundaries::default();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(bounds.classify(lo) <= bounds.classify(hi));
        }

        #[test]
        fn tier_matches_its_interval(p in any::<i32>()) {
            let bounds = TierBoundaries::default();
            let tier = bounds.classify(p);
            let (lo, hi) = bounds.interval(tier);
            prop_assert!(lo.map_or(true, |lo| p >= lo));
            prop_assert!(hi.map_or(true, |hi| p < hi));
        }

        #[test]
        fn size_bins_cover_positive_integers(n in 1u64..10_000_000) {
            let hits = JobSizeBin::ALL
                .iter()
                .filter(|b| {
                    let (lo, hi) = b.range();
                    n >= lo && hi.map_or(true, |hi| n <= hi)
                })
                .count();
            prop_assert_eq!(hits, 1);
            let bin = job_size_bin(n).unwrap();
            let (lo, hi) = bin.range();
            prop_assert!(n >= lo && hi.map_or(true, |hi| n <= hi));
        }

        #[test]
        fn resource_addition_commutes(
            a in (0.0f64..1e3, 0.0f64..1e3),
            b in (0.0f64..1e3, 0.0f64..1e3),
            c in (0.0f64..1e3, 0.0f64..1e3),
        ) {
            let (a, b, c) = (
                Resources::new(a.0, a.1),
                Resources::new(b.0, b.1),
                Resources::new(c.0, c.1),
            );
            let l = (a + b) + c;
            let r = a + (c + b);
            prop_assert!((l.cpus - r.cpus).abs() <= 1e-9 * l.cpus.max(1.0));
            prop_assert!((l.memory - r.memory).abs() <= 1e-9 * l.memory.max(1.0));
        }
    }
}
