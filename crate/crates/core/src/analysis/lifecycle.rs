//! Job lifecycles: durations, final states per tier and time spent in each
//! lifecycle state.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::CategoricalDistribution;
use crate::config::{AnalysisConfig, DurationMode};
use crate::model::{
    is_sentinel, micros_to_seconds, CollectionEvent, CollectionType, EventType, Micros,
    PriorityTier, TierBoundaries, MICROS_PER_SECOND,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobLifecycle {
    pub collection_id: u64,
    pub tier: PriorityTier,
    /// Sorted by `(time, event_type code)`.
    pub events: Vec<(Micros, EventType)>,
    /// Microseconds from the start event to the first terminal event.
    pub duration: Option<Micros>,
    pub final_state: EventType,
    /// No terminal event observed.
    pub censored: bool,
    /// The first terminal event precedes the start event.
    pub malformed: bool,
}

impl JobLifecycle {
    /// Builds one lifecycle from a job's events, in any order.
    pub fn from_events(
        collection_id: u64,
        events: &[&CollectionEvent],
        boundaries: &TierBoundaries,
        mode: DurationMode,
    ) -> Self {
        assert!(!events.is_empty(), "a lifecycle needs at least one event");
        let mut sorted: Vec<&CollectionEvent> = events.to_vec();
        // Stable: equal (time, code) keep input order.
        sorted.sort_by_key(|e| (e.time, e.event_type.code()));
        let tier = boundaries.classify(sorted[0].priority);
        let timeline: Vec<(Micros, EventType)> =
            sorted.iter().map(|e| (e.time, e.event_type)).collect();

        let start_type = match mode {
            DurationMode::Running => EventType::Schedule,
            DurationMode::Submit => EventType::Submit,
        };
        let start = timeline
            .iter()
            .find(|(t, e)| *e == start_type && !is_sentinel(*t))
            .map(|(t, _)| *t);
        let end = timeline
            .iter()
            .find(|(t, e)| e.is_terminal() && !is_sentinel(*t))
            .map(|(t, _)| *t);
        let censored = !timeline.iter().any(|(_, e)| e.is_terminal());
        let (duration, malformed) = match (start, end) {
            (Some(s), Some(e)) if e >= s => (Some(e - s), false),
            (Some(_), Some(_)) => (None, true),
            _ => (None, false),
        };
        JobLifecycle {
            collection_id,
            tier,
            final_state: timeline.last().expect("non-empty").1,
            events: timeline,
            duration,
            censored,
            malformed,
        }
    }

    pub fn duration_seconds(&self) -> Option<f64> {
        self.duration.map(micros_to_seconds)
    }

    /// Residence time per consecutive event pair, attributed to the earlier
    /// event's state. Only duration-bearing states absorb time; pairs with a
    /// sentinel timestamp are skipped.
    pub fn state_attributions(&self) -> impl Iterator<Item = (EventType, Micros)> + '_ {
        self.events.windows(2).filter_map(|w| {
            let (t0, state) = w[0];
            let (t1, _) = w[1];
            (state.is_duration_bearing() && !is_sentinel(t0) && !is_sentinel(t1))
                .then(|| (state, t1 - t0))
        })
    }
}

/// Groups collection events by job and builds one lifecycle per JOB
/// collection, ordered by collection id. ALLOC_SET collections are skipped.
pub fn build_lifecycles<'a>(
    events: impl IntoIterator<Item = &'a CollectionEvent>,
    boundaries: &TierBoundaries,
    mode: DurationMode,
) -> Vec<JobLifecycle> {
    let mut by_job: BTreeMap<u64, Vec<&CollectionEvent>> = BTreeMap::new();
    for e in events {
        by_job.entry(e.collection_id).or_default().push(e);
    }
    by_job
        .into_iter()
        .filter(|(_, evs)| evs.iter().all(|e| e.collection_type == CollectionType::Job))
        .map(|(id, evs)| JobLifecycle::from_events(id, &evs, boundaries, mode))
        .collect()
}

/// Band labels for edges in seconds, e.g. `0-100s`, `>=86400s`.
pub fn band_labels(edges: &[u64]) -> Vec<String> {
    edges
        .iter()
        .enumerate()
        .map(|(i, lo)| match edges.get(i + 1) {
            Some(hi) => format!("{lo}-{hi}s"),
            None => format!(">={lo}s"),
        })
        .collect()
}

fn band_of(duration: Micros, edges: &[u64]) -> usize {
    edges
        .iter()
        .rposition(|&e| duration >= e * MICROS_PER_SECOND)
        .unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DurationHistogram {
    pub bands: CategoricalDistribution,
    /// Jobs without a terminal event.
    pub censored: u64,
    /// Terminated jobs that never reached the start event.
    pub without_start: u64,
    pub malformed: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct DurationCounts {
    bands: Vec<u64>,
    censored: u64,
    without_start: u64,
    malformed: u64,
}

impl DurationCounts {
    fn new(edges: &[u64]) -> Self {
        DurationCounts {
            bands: vec![0; edges.len()],
            ..Default::default()
        }
    }

    fn add(&mut self, job: &JobLifecycle, edges: &[u64]) {
        if let Some(d) = job.duration {
            self.bands[band_of(d, edges)] += 1;
        } else if job.malformed {
            self.malformed += 1;
        } else if job.censored {
            self.censored += 1;
        } else {
            self.without_start += 1;
        }
    }

    fn merge(&mut self, other: &DurationCounts) {
        for (a, b) in self.bands.iter_mut().zip(&other.bands) {
            *a += b;
        }
        self.censored += other.censored;
        self.without_start += other.without_start;
        self.malformed += other.malformed;
    }

    fn finish(&self, edges: &[u64]) -> DurationHistogram {
        DurationHistogram {
            bands: CategoricalDistribution::from_counts(
                band_labels(edges).into_iter().zip(self.bands.iter().copied()),
            ),
            censored: self.censored,
            without_start: self.without_start,
            malformed: self.malformed,
        }
    }
}

/// Histogram of job durations over bands starting at `edges` (seconds).
/// Jobs without a duration are counted separately.
pub fn duration_histogram(lifecycles: &[JobLifecycle], edges: &[u64]) -> DurationHistogram {
    let mut c = DurationCounts::new(edges);
    for job in lifecycles {
        c.add(job, edges);
    }
    c.finish(edges)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TierFinalStates {
    pub tier: PriorityTier,
    pub final_states: CategoricalDistribution,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct FinalStateCounts([BTreeMap<EventType, u64>; 5]);

impl FinalStateCounts {
    fn add(&mut self, job: &JobLifecycle) {
        *self.0[job.tier.index()].entry(job.final_state).or_default() += 1;
    }

    fn merge(&mut self, other: &FinalStateCounts) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            for (k, v) in b {
                *a.entry(*k).or_default() += v;
            }
        }
    }

    fn finish(&self) -> Vec<TierFinalStates> {
        PriorityTier::ALL
            .iter()
            .map(|&tier| TierFinalStates {
                tier,
                final_states: CategoricalDistribution::from_present(
                    self.0[tier.index()].iter().map(|(e, c)| (e.name(), *c)),
                ),
            })
            .collect()
    }
}

/// Per tier, the distribution of each job's last observed event type.
pub fn final_state_rates_by_tier(lifecycles: &[JobLifecycle]) -> Vec<TierFinalStates> {
    let mut c = FinalStateCounts::default();
    for job in lifecycles {
        c.add(job);
    }
    c.finish()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateStat {
    pub state: EventType,
    pub count: u64,
    pub total_micros: u128,
    pub mean_seconds: Option<f64>,
    pub min_seconds: Option<f64>,
    pub max_seconds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateDurationStats {
    pub states: Vec<StateStat>,
}

impl StateDurationStats {
    pub fn get(&self, state: EventType) -> Option<&StateStat> {
        self.states.iter().find(|s| s.state == state)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Accum {
    count: u64,
    total: u128,
    min: Option<Micros>,
    max: Option<Micros>,
}

impl Accum {
    fn add(&mut self, v: Micros) {
        self.count += 1;
        self.total += v as u128;
        self.min = Some(self.min.map_or(v, |m| m.min(v)));
        self.max = Some(self.max.map_or(v, |m| m.max(v)));
    }

    fn merge(&mut self, o: &Accum) {
        self.count += o.count;
        self.total += o.total;
        self.min = match (self.min, o.min) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        self.max = match (self.max, o.max) {
            (Some(a), Some(b)) => Some(a.max(b)),
            (a, b) => a.or(b),
        };
    }

    fn mean_seconds(&self) -> Option<f64> {
        (self.count > 0).then(|| mean_seconds(self.total, self.count))
    }
}

/// Mean of `count` durations summing to `total` microseconds, in seconds.
pub fn mean_seconds(total: u128, count: u64) -> f64 {
    total as f64 / count as f64 / MICROS_PER_SECOND as f64
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct StateAccums([Accum; 11]);

impl StateAccums {
    fn add(&mut self, job: &JobLifecycle) {
        for (state, d) in job.state_attributions() {
            self.0[state.code() as usize].add(d);
        }
    }

    fn merge(&mut self, other: &StateAccums) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            a.merge(b);
        }
    }

    fn finish(&self) -> StateDurationStats {
        StateDurationStats {
            states: EventType::duration_bearing()
                .map(|state| {
                    let a = &self.0[state.code() as usize];
                    StateStat {
                        state,
                        count: a.count,
                        total_micros: a.total,
                        mean_seconds: a.mean_seconds(),
                        min_seconds: a.min.map(micros_to_seconds),
                        max_seconds: a.max.map(micros_to_seconds),
                    }
                })
                .collect(),
        }
    }
}

/// Sample count, mean, min and max residence time for the six
/// duration-bearing states.
pub fn state_durations(lifecycles: &[JobLifecycle]) -> StateDurationStats {
    let mut acc = StateAccums::default();
    for job in lifecycles {
        acc.add(job);
    }
    acc.finish()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TierDuration {
    pub tier: PriorityTier,
    pub jobs_with_duration: u64,
    pub mean_seconds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifecycleSection {
    pub duration_mode: DurationMode,
    pub jobs: u64,
    pub durations: DurationHistogram,
    pub tier_durations: Vec<TierDuration>,
    pub final_states_by_tier: Vec<TierFinalStates>,
    pub state_durations: StateDurationStats,
}

/// Partial aggregate over one collection-keyed partition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LifecyclePartial {
    jobs: u64,
    durations: DurationCounts,
    tier_durations: [Accum; 5],
    final_states: FinalStateCounts,
    states: StateAccums,
}

impl LifecyclePartial {
    pub fn new(config: &AnalysisConfig) -> Self {
        LifecyclePartial {
            jobs: 0,
            durations: DurationCounts::new(&config.duration_band_edges),
            tier_durations: Default::default(),
            final_states: FinalStateCounts::default(),
            states: StateAccums::default(),
        }
    }

    pub fn add(&mut self, job: &JobLifecycle, config: &AnalysisConfig) {
        self.jobs += 1;
        self.durations.add(job, &config.duration_band_edges);
        if let Some(d) = job.duration {
            self.tier_durations[job.tier.index()].add(d);
        }
        self.final_states.add(job);
        self.states.add(job);
    }

    pub fn fold(collections: &[&CollectionEvent], config: &AnalysisConfig) -> Self {
        let mut p = Self::new(config);
        for job in build_lifecycles(
            collections.iter().copied(),
            &config.tier_boundaries,
            config.duration_mode,
        ) {
            p.add(&job, config);
        }
        p
    }

    pub fn merge(&mut self, other: &LifecyclePartial) {
        self.jobs += other.jobs;
        self.durations.merge(&other.durations);
        for (a, b) in self.tier_durations.iter_mut().zip(&other.tier_durations) {
            a.merge(b);
        }
        self.final_states.merge(&other.final_states);
        self.states.merge(&other.states);
    }

    pub fn finish(&self, config: &AnalysisConfig) -> LifecycleSection {
        LifecycleSection {
            duration_mode: config.duration_mode,
            jobs: self.jobs,
            durations: self.durations.finish(&config.duration_band_edges),
            tier_durations: PriorityTier::ALL
                .iter()
                .map(|&tier| {
                    let a = &self.tier_durations[tier.index()];
                    TierDuration {
                        tier,
                        jobs_with_duration: a.count,
                        mean_seconds: a.mean_seconds(),
                    }
                })
                .collect(),
            final_states_by_tier: self.final_states.finish(),
            state_durations: self.states.finish(),
        }
    }
}
