//! Property-by-property characterization of the event tables: event-type
//! counts, daily activity, priority tiers, collection constraints, job
//! sizes and the scheduled-instance fraction.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{CategoricalDistribution, DailyCounts, DailySeries, LifecycleEvent};
use crate::config::AnalysisConfig;
use crate::grid::WindowGrid;
use crate::model::{
    job_size_bin, CollectionEvent, CollectionType, EventType, InstanceEvent, InstanceType,
    JobSizeBin, PriorityTier, TierBoundaries, VerticalScaling,
};

/// Per-collection fields summarized by [`field_distribution`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollectionField {
    AllocHosting,
    ParentPresence,
    MaxPerMachine,
    MaxPerSwitch,
    VerticalScaling,
}

pub const UNSET: &str = "unset";

pub fn count_event_types<'a, E: LifecycleEvent + 'a>(
    events: impl IntoIterator<Item = &'a E>,
) -> CategoricalDistribution {
    let mut counts = [0u64; 11];
    for e in events {
        counts[e.event_type().code() as usize] += 1;
    }
    event_type_distribution(&counts)
}

fn event_type_distribution(counts: &[u64; 11]) -> CategoricalDistribution {
    CategoricalDistribution::from_present(
        EventType::ALL.iter().map(|e| (e.name(), counts[e.code() as usize])),
    )
}

/// Daily counts of labelled events. Events for which `label_fn` returns
/// `None` are ignored; labelled events with sentinel times are counted in
/// `exclusions`.
pub fn events_per_day<'a, E, L>(
    events: impl IntoIterator<Item = &'a E>,
    grid: &WindowGrid,
    labels: &[L],
    label_fn: impl Fn(&E) -> Option<L>,
) -> DailySeries
where
    E: LifecycleEvent + 'a,
    L: PartialEq + ToString,
{
    let mut counts = DailyCounts::new(grid.day_count, labels.len());
    for e in events {
        if let Some(label) = label_fn(e) {
            let idx = labels
                .iter()
                .position(|l| *l == label)
                .expect("label_fn returned a label outside `labels`");
            counts.record(grid.day_of(e.time()), idx);
        }
    }
    counts.finish(labels)
}

pub fn tier_activity_per_day<'a, E: LifecycleEvent + 'a>(
    events: impl IntoIterator<Item = &'a E>,
    grid: &WindowGrid,
    boundaries: &TierBoundaries,
) -> DailySeries {
    events_per_day(events, grid, PriorityTier::ALL, |e| {
        Some(boundaries.classify(e.priority()))
    })
}

/// First event per collection by `(time, event_type code)`; ties keep the
/// earlier input record.
pub fn first_events<'a>(
    collections: impl IntoIterator<Item = &'a CollectionEvent>,
) -> BTreeMap<u64, CollectionEvent> {
    let mut first: BTreeMap<u64, CollectionEvent> = BTreeMap::new();
    for e in collections {
        first
            .entry(e.collection_id)
            .and_modify(|cur| {
                if (e.time, e.event_type.code()) < (cur.time, cur.event_type.code()) {
                    *cur = *e;
                }
            })
            .or_insert(*e);
    }
    first
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct FieldCounts {
    top_level: u64,
    hosted: u64,
    no_parent: u64,
    has_parent: u64,
    max_per_machine: BTreeMap<Option<u32>, u64>,
    max_per_switch: BTreeMap<Option<u32>, u64>,
    vertical_scaling: [u64; 4],
}

impl FieldCounts {
    fn add(&mut self, e: &CollectionEvent) {
        match e.alloc_collection_id {
            None => self.top_level += 1,
            Some(_) => self.hosted += 1,
        }
        match e.parent_collection_id {
            None => self.no_parent += 1,
            Some(_) => self.has_parent += 1,
        }
        *self.max_per_machine.entry(e.max_per_machine).or_default() += 1;
        *self.max_per_switch.entry(e.max_per_switch).or_default() += 1;
        self.vertical_scaling[e.vertical_scaling.code() as usize] += 1;
    }

    fn merge(&mut self, other: &FieldCounts) {
        self.top_level += other.top_level;
        self.hosted += other.hosted;
        self.no_parent += other.no_parent;
        self.has_parent += other.has_parent;
        for (k, v) in &other.max_per_machine {
            *self.max_per_machine.entry(*k).or_default() += v;
        }
        for (k, v) in &other.max_per_switch {
            *self.max_per_switch.entry(*k).or_default() += v;
        }
        for (a, b) in self.vertical_scaling.iter_mut().zip(other.vertical_scaling) {
            *a += b;
        }
    }

    fn distribution(&self, field: CollectionField) -> CategoricalDistribution {
        fn optional(map: &BTreeMap<Option<u32>, u64>) -> CategoricalDistribution {
            let unset = map.get(&None).copied().unwrap_or(0);
            CategoricalDistribution::from_counts(
                std::iter::once((UNSET.to_string(), unset)).chain(
                    map.iter()
                        .filter_map(|(k, v)| k.map(|k| (k.to_string(), *v))),
                ),
            )
        }
        match field {
            CollectionField::AllocHosting => CategoricalDistribution::from_counts([
                ("top_level", self.top_level),
                ("hosted", self.hosted),
            ]),
            CollectionField::ParentPresence => CategoricalDistribution::from_counts([
                ("no_parent", self.no_parent),
                ("has_parent", self.has_parent),
            ]),
            CollectionField::MaxPerMachine => optional(&self.max_per_machine),
            CollectionField::MaxPerSwitch => optional(&self.max_per_switch),
            CollectionField::VerticalScaling => CategoricalDistribution::from_counts(
                VerticalScaling::ALL
                    .iter()
                    .map(|v| (v.name(), self.vertical_scaling[v.code() as usize])),
            ),
        }
    }
}

/// Distribution of one collection-level field, taking each collection's
/// value from its first event.
pub fn field_distribution<'a>(
    collections: impl IntoIterator<Item = &'a CollectionEvent>,
    field: CollectionField,
) -> CategoricalDistribution {
    let mut counts = FieldCounts::default();
    for e in first_events(collections).values() {
        counts.add(e);
    }
    counts.distribution(field)
}

/// Jobs per tier, each job classified by its first event's priority.
pub fn job_tier_distribution<'a>(
    collections: impl IntoIterator<Item = &'a CollectionEvent>,
    boundaries: &TierBoundaries,
) -> CategoricalDistribution {
    let mut tiers = [0u64; 5];
    for e in first_events(collections).values() {
        if e.collection_type == CollectionType::Job {
            tiers[boundaries.classify(e.priority).index()] += 1;
        }
    }
    tier_distribution(&tiers)
}

fn tier_distribution(tiers: &[u64; 5]) -> CategoricalDistribution {
    CategoricalDistribution::from_counts(PriorityTier::ALL.iter().map(|t| (t.name(), tiers[t.index()])))
}

fn job_max_indices<'a>(events: impl IntoIterator<Item = &'a InstanceEvent>) -> HashMap<u64, u32> {
    let mut max_index: HashMap<u64, u32> = HashMap::new();
    for e in events {
        if e.instance_type == InstanceType::Task {
            let m = max_index.entry(e.collection_id).or_insert(e.instance_index);
            *m = (*m).max(e.instance_index);
        }
    }
    max_index
}

/// Tasks-per-job histogram; a job's size is its largest task index plus one.
pub fn job_size_distribution<'a>(
    events: impl IntoIterator<Item = &'a InstanceEvent>,
) -> CategoricalDistribution {
    let mut bins = [0u64; 6];
    for (_, m) in job_max_indices(events) {
        let bin = job_size_bin(m as u64 + 1).expect("size is at least one");
        bins[bin.code() as usize] += 1;
    }
    size_distribution(&bins)
}

fn size_distribution(bins: &[u64; 6]) -> CategoricalDistribution {
    CategoricalDistribution::from_counts(JobSizeBin::ALL.iter().map(|b| (b.name(), bins[b.code() as usize])))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduledFraction {
    pub instances: u64,
    pub scheduled: u64,
    pub fraction: f64,
    /// Set when there were no instances; `fraction` is then 0.
    pub empty: bool,
}

impl ScheduledFraction {
    pub fn new(instances: u64, scheduled: u64) -> Self {
        ScheduledFraction {
            instances,
            scheduled,
            fraction: if instances == 0 {
                0.0
            } else {
                scheduled as f64 / instances as f64
            },
            empty: instances == 0,
        }
    }
}

fn instance_placement<'a>(events: impl IntoIterator<Item = &'a InstanceEvent>) -> (u64, u64) {
    let mut placed: HashMap<(u64, u32), bool> = HashMap::new();
    for e in events {
        let p = placed.entry((e.collection_id, e.instance_index)).or_insert(false);
        *p |= e.machine_id.is_some();
    }
    let scheduled = placed.values().filter(|&&p| p).count() as u64;
    (placed.len() as u64, scheduled)
}

/// Fraction of distinct instances that carry a machine on at least one event.
pub fn scheduled_fraction<'a>(events: impl IntoIterator<Item = &'a InstanceEvent>) -> ScheduledFraction {
    let (instances, scheduled) = instance_placement(events);
    ScheduledFraction::new(instances, scheduled)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeterogeneitySection {
    pub collection_event_types: CategoricalDistribution,
    pub instance_event_types: CategoricalDistribution,
    pub collection_events_per_day: DailySeries,
    pub tiers_per_day: DailySeries,
    pub job_tiers: CategoricalDistribution,
    pub alloc_hosting: CategoricalDistribution,
    pub parent_presence: CategoricalDistribution,
    pub max_per_machine: CategoricalDistribution,
    pub max_per_switch: CategoricalDistribution,
    pub vertical_scaling: CategoricalDistribution,
    pub job_sizes: CategoricalDistribution,
    pub scheduled_fraction: ScheduledFraction,
}

/// Partial aggregate over one collection-keyed partition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeterogeneityPartial {
    collection_types: [u64; 11],
    instance_types: [u64; 11],
    events_per_day: DailyCounts,
    tiers_per_day: DailyCounts,
    job_tiers: [u64; 5],
    fields: FieldCounts,
    sizes: [u64; 6],
    instances: u64,
    scheduled: u64,
}

impl HeterogeneityPartial {
    pub fn new(grid: &WindowGrid, config: &AnalysisConfig) -> Self {
        HeterogeneityPartial {
            collection_types: [0; 11],
            instance_types: [0; 11],
            events_per_day: DailyCounts::new(grid.day_count, config.daily_event_labels.len()),
            tiers_per_day: DailyCounts::new(grid.day_count, 5),
            job_tiers: [0; 5],
            fields: FieldCounts::default(),
            sizes: [0; 6],
            instances: 0,
            scheduled: 0,
        }
    }

    /// Folds one partition. All events of a collection must be in the same
    /// partition.
    pub fn fold(
        collections: &[&CollectionEvent],
        instances: &[&InstanceEvent],
        grid: &WindowGrid,
        config: &AnalysisConfig,
    ) -> Self {
        let mut p = Self::new(grid, config);
        let bounds = &config.tier_boundaries;
        for e in collections {
            p.collection_types[e.event_type.code() as usize] += 1;
            let day = grid.day_of(e.time);
            if let Some(l) = config.daily_event_labels.iter().position(|l| *l == e.event_type) {
                p.events_per_day.record(day, l);
            }
            p.tiers_per_day.record(day, bounds.classify(e.priority).index());
        }
        for first in first_events(collections.iter().copied()).values() {
            p.fields.add(first);
            if first.collection_type == CollectionType::Job {
                p.job_tiers[bounds.classify(first.priority).index()] += 1;
            }
        }
        for e in instances {
            p.instance_types[e.event_type.code() as usize] += 1;
        }
        for (_, m) in job_max_indices(instances.iter().copied()) {
            p.sizes[job_size_bin(m as u64 + 1).expect("size >= 1").code() as usize] += 1;
        }
        let (n, s) = instance_placement(instances.iter().copied());
        p.instances = n;
        p.scheduled = s;
        p
    }

    pub fn merge(&mut self, other: &HeterogeneityPartial) {
        for (a, b) in self.collection_types.iter_mut().zip(other.collection_types) {
            *a += b;
        }
        for (a, b) in self.instance_types.iter_mut().zip(other.instance_types) {
            *a += b;
        }
        self.events_per_day.merge(&other.events_per_day);
        self.tiers_per_day.merge(&other.tiers_per_day);
        for (a, b) in self.job_tiers.iter_mut().zip(other.job_tiers) {
            *a += b;
        }
        self.fields.merge(&other.fields);
        for (a, b) in self.sizes.iter_mut().zip(other.sizes) {
            *a += b;
        }
        self.instances += other.instances;
        self.scheduled += other.scheduled;
    }

    pub fn finish(&self, config: &AnalysisConfig) -> HeterogeneitySection {
        HeterogeneitySection {
            collection_event_types: event_type_distribution(&self.collection_types),
            instance_event_types: event_type_distribution(&self.instance_types),
            collection_events_per_day: self.events_per_day.finish(&config.daily_event_labels),
            tiers_per_day: self.tiers_per_day.finish(PriorityTier::ALL),
            job_tiers: tier_distribution(&self.job_tiers),
            alloc_hosting: self.fields.distribution(CollectionField::AllocHosting),
            parent_presence: self.fields.distribution(CollectionField::ParentPresence),
            max_per_machine: self.fields.distribution(CollectionField::MaxPerMachine),
            max_per_switch: self.fields.distribution(CollectionField::MaxPerSwitch),
            vertical_scaling: self.fields.distribution(CollectionField::VerticalScaling),
            job_sizes: size_distribution(&self.sizes),
            scheduled_fraction: ScheduledFraction::new(self.instances, self.scheduled),
        }
    }

    /// Day-sentinel exclusions for the data-quality section.
    pub fn day_exclusions(&self) -> u64 {
        self.events_per_day.exclusions
    }
}
