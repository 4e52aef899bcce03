//! The four characterization analyses and the shared result types.
//!
//! Every analysis exposes a per-partition partial aggregate with an
//! associative, commutative `merge`, so the engine can fold partitions
//! independently and combine them in any order.

pub mod cluster;
pub mod heterogeneity;
pub mod lifecycle;
pub mod resources;

use serde::{Deserialize, Serialize};

use crate::model::{CollectionEvent, EventType, InstanceEvent, Micros};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    pub label: String,
    pub count: u64,
    pub fraction: f64,
}

/// Ordered `(label, count)` pairs with their total.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalDistribution {
    pub buckets: Vec<Bucket>,
    pub total: u64,
}

impl CategoricalDistribution {
    /// Keeps every bucket, including empty ones.
    pub fn from_counts<L: ToString>(counts: impl IntoIterator<Item = (L, u64)>) -> Self {
        let pairs: Vec<(String, u64)> = counts
            .into_iter()
            .map(|(l, c)| (l.to_string(), c))
            .collect();
        let total: u64 = pairs.iter().map(|(_, c)| c).sum();
        let buckets = pairs
            .into_iter()
            .map(|(label, count)| Bucket {
                fraction: if total == 0 {
                    0.0
                } else {
                    count as f64 / total as f64
                },
                label,
                count,
            })
            .collect();
        CategoricalDistribution { buckets, total }
    }

    /// Drops empty buckets.
    pub fn from_present<L: ToString>(counts: impl IntoIterator<Item = (L, u64)>) -> Self {
        Self::from_counts(counts.into_iter().filter(|(_, c)| *c > 0))
    }

    pub fn empty() -> Self {
        CategoricalDistribution {
            buckets: Vec::new(),
            total: 0,
        }
    }

    pub fn count(&self, label: &str) -> u64 {
        self.buckets
            .iter()
            .find(|b| b.label == label)
            .map_or(0, |b| b.count)
    }

    pub fn fraction(&self, label: &str) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.count(label) as f64 / self.total as f64
        }
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.buckets.iter().map(|b| b.label.as_str())
    }
}

/// Per-day counts for a fixed label set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailySeries {
    pub labels: Vec<String>,
    /// `days[d][l]` is the count of label `l` on day `d`.
    pub days: Vec<Vec<u64>>,
    /// Labelled events left out because of sentinel or out-of-horizon times.
    pub exclusions: u64,
}

impl DailySeries {
    pub fn total(&self, label: &str) -> u64 {
        match self.labels.iter().position(|l| l == label) {
            Some(i) => self.days.iter().map(|d| d[i]).sum(),
            None => 0,
        }
    }

    pub fn counted(&self) -> u64 {
        self.days.iter().flatten().sum()
    }
}

/// Dense per-day counter backing [`DailySeries`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DailyCounts {
    label_count: usize,
    counts: Vec<u64>,
    pub exclusions: u64,
}

impl DailyCounts {
    pub fn new(day_count: u64, label_count: usize) -> Self {
        DailyCounts {
            label_count,
            counts: vec![0; day_count as usize * label_count],
            exclusions: 0,
        }
    }

    pub fn record(&mut self, day: Option<u64>, label: usize) {
        match day {
            Some(d) => self.counts[d as usize * self.label_count + label] += 1,
            None => self.exclusions += 1,
        }
    }

    pub fn merge(&mut self, other: &DailyCounts) {
        assert_eq!(self.counts.len(), other.counts.len(), "day grids differ");
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.exclusions += other.exclusions;
    }

    pub fn finish<L: ToString>(&self, labels: &[L]) -> DailySeries {
        DailySeries {
            labels: labels.iter().map(|l| l.to_string()).collect(),
            days: self
                .counts
                .chunks(self.label_count.max(1))
                .map(|c| c.to_vec())
                .collect(),
            exclusions: self.exclusions,
        }
    }
}

/// Records carrying a lifecycle event and a priority.
pub trait LifecycleEvent {
    fn time(&self) -> Micros;
    fn event_type(&self) -> EventType;
    fn priority(&self) -> i32;
}

impl LifecycleEvent for CollectionEvent {
    fn time(&self) -> Micros {
        self.time
    }
    fn event_type(&self) -> EventType {
        self.event_type
    }
    fn priority(&self) -> i32 {
        self.priority
    }
}

impl LifecycleEvent for InstanceEvent {
    fn time(&self) -> Micros {
        self.time
    }
    fn event_type(&self) -> EventType {
        self.event_type
    }
    fn priority(&self) -> i32 {
        self.priority
    }
}

impl<T: LifecycleEvent> LifecycleEvent for &T {
    fn time(&self) -> Micros {
        (*self).time()
    }
    fn event_type(&self) -> EventType {
        (*self).event_type()
    }
    fn priority(&self) -> i32 {
        (*self).priority()
    }
}
