//! Partitioned execution: every analysis folds each partition on its own
//! and the partials are merged in partition order.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::cluster::ClusterPartial;
use crate::analysis::heterogeneity::HeterogeneityPartial;
use crate::analysis::lifecycle::LifecyclePartial;
use crate::analysis::resources::ResourcesPartial;
use crate::config::AnalysisConfig;
use crate::error::EngineError;
use crate::grid::WindowGrid;
use crate::io::{partition_by_key, PartitionKey, Strictness, TraceBundle};
use crate::model::{CollectionEvent, InstanceEvent, MachineEvent, UsageRecord};
use crate::report::{AnalysisReport, DataQuality, ReportMetadata};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Analysis {
    Heterogeneity,
    Lifecycle,
    Resources,
    Cluster,
}

impl Analysis {
    pub const ALL: [Analysis; 4] = [
        Analysis::Heterogeneity,
        Analysis::Lifecycle,
        Analysis::Resources,
        Analysis::Cluster,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Analysis::Heterogeneity => "heterogeneity",
            Analysis::Lifecycle => "lifecycle",
            Analysis::Resources => "resources",
            Analysis::Cluster => "cluster",
        }
    }

    /// Key the analysis's partitions must respect.
    pub fn required_key(self) -> PartitionKey {
        match self {
            Analysis::Cluster => PartitionKey::Machine,
            _ => PartitionKey::Collection,
        }
    }
}

/// One characterization run over a bundle.
#[derive(Debug, Clone)]
pub struct AnalysisJob<'a> {
    pub bundle: &'a TraceBundle,
    pub config: AnalysisConfig,
    pub analyses: BTreeSet<Analysis>,
    /// Partition key per analysis; defaults to the required key.
    pub plan: BTreeMap<Analysis, PartitionKey>,
    pub worker_count: usize,
    /// Defaults to four partitions per worker.
    pub partition_count: Option<usize>,
    pub strictness: Strictness,
    #[doc(hidden)]
    pub fail_partition: Option<usize>,
}

impl<'a> AnalysisJob<'a> {
    pub fn new(bundle: &'a TraceBundle, config: AnalysisConfig) -> Self {
        AnalysisJob {
            bundle,
            config,
            analyses: Analysis::ALL.into_iter().collect(),
            plan: Analysis::ALL.iter().map(|a| (*a, a.required_key())).collect(),
            worker_count: 1,
            partition_count: None,
            strictness: Strictness::Permissive,
            fail_partition: None,
        }
    }

    pub fn workers(mut self, n: usize) -> Self {
        self.worker_count = n;
        self
    }

    pub fn partitions(mut self, n: usize) -> Self {
        self.partition_count = Some(n);
        self
    }

    pub fn only(mut self, analyses: impl IntoIterator<Item = Analysis>) -> Self {
        self.analyses = analyses.into_iter().collect();
        self
    }

    pub fn partition_key(mut self, analysis: Analysis, key: PartitionKey) -> Self {
        self.plan.insert(analysis, key);
        self
    }

    pub fn strictness(mut self, s: Strictness) -> Self {
        self.strictness = s;
        self
    }

    pub fn effective_partitions(&self) -> usize {
        self.partition_count.unwrap_or(self.worker_count * 4).max(1)
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        if self.worker_count == 0 {
            return Err(EngineError::InvalidJob("worker_count must be at least 1".into()));
        }
        if self.partition_count == Some(0) {
            return Err(EngineError::InvalidJob("partition_count must be at least 1".into()));
        }
        if self.analyses.is_empty() {
            return Err(EngineError::InvalidJob("no analyses enabled".into()));
        }
        for a in &self.analyses {
            let planned = self.plan.get(a).copied().unwrap_or(a.required_key());
            if planned != a.required_key() {
                return Err(EngineError::IncompatiblePartitionKey {
                    analysis: a.name(),
                    required: a.required_key().name(),
                    planned: planned.name(),
                });
            }
        }
        self.config
            .validate()
            .map_err(|e| EngineError::InvalidJob(e.to_string()))
    }

    pub fn grid(&self) -> WindowGrid {
        WindowGrid::new(
            self.bundle.trace_start,
            self.bundle.trace_end,
            self.config.window_seconds,
        )
    }
}

/// Records of one partition. Collection-keyed tables and machine events are
/// split independently.
#[derive(Debug, Clone, Default)]
pub struct PartitionInput<'a> {
    pub collections: Vec<&'a CollectionEvent>,
    pub instances: Vec<&'a InstanceEvent>,
    pub usage: Vec<&'a UsageRecord>,
    pub machines: Vec<&'a MachineEvent>,
}

impl<'a> PartitionInput<'a> {
    pub fn whole(bundle: &'a TraceBundle) -> Self {
        PartitionInput {
            collections: bundle.collection_events.iter().collect(),
            instances: bundle.instance_events.iter().collect(),
            usage: bundle.usage.iter().collect(),
            machines: bundle.machine_events.iter().collect(),
        }
    }
}

/// Splits a bundle into `n` key-respecting partitions.
pub fn split_bundle(bundle: &TraceBundle, n: usize) -> Vec<PartitionInput<'_>> {
    let mut c = partition_by_key(&bundle.collection_events, PartitionKey::Collection, n).into_iter();
    let mut i = partition_by_key(&bundle.instance_events, PartitionKey::Collection, n).into_iter();
    let mut u = partition_by_key(&bundle.usage, PartitionKey::Collection, n).into_iter();
    let mut m = partition_by_key(&bundle.machine_events, PartitionKey::Machine, n).into_iter();
    (0..n)
        .map(|_| PartitionInput {
            collections: c.next().unwrap_or_default(),
            instances: i.next().unwrap_or_default(),
            usage: u.next().unwrap_or_default(),
            machines: m.next().unwrap_or_default(),
        })
        .collect()
}

/// Partials of every enabled analysis for one partition.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialReport {
    pub heterogeneity: Option<HeterogeneityPartial>,
    pub lifecycle: Option<LifecyclePartial>,
    /// Also present when only the cluster analysis is enabled, since the
    /// utilization figures need the usage sums.
    pub resources: Option<ResourcesPartial>,
    pub cluster: Option<ClusterPartial>,
}

impl PartialReport {
    pub fn fold(
        input: &PartitionInput<'_>,
        analyses: &BTreeSet<Analysis>,
        grid: &WindowGrid,
        config: &AnalysisConfig,
    ) -> Self {
        let on = |a| analyses.contains(&a);
        PartialReport {
            heterogeneity: on(Analysis::Heterogeneity).then(|| {
                HeterogeneityPartial::fold(&input.collections, &input.instances, grid, config)
            }),
            lifecycle: on(Analysis::Lifecycle)
                .then(|| LifecyclePartial::fold(&input.collections, config)),
            resources: (on(Analysis::Resources) || on(Analysis::Cluster)).then(|| {
                ResourcesPartial::fold(&input.instances, &input.usage, grid, config)
            }),
            cluster: on(Analysis::Cluster).then(|| ClusterPartial::fold(&input.machines, grid)),
        }
    }

    pub fn merge(&mut self, other: &PartialReport) {
        fn both<T>(a: &mut Option<T>, b: &Option<T>, f: impl FnOnce(&mut T, &T)) {
            if let (Some(a), Some(b)) = (a.as_mut(), b.as_ref()) {
                f(a, b);
            }
        }
        both(&mut self.heterogeneity, &other.heterogeneity, |a, b| a.merge(b));
        both(&mut self.lifecycle, &other.lifecycle, |a, b| a.merge(b));
        both(&mut self.resources, &other.resources, |a, b| a.merge(b));
        both(&mut self.cluster, &other.cluster, |a, b| a.merge(b));
    }

    /// Builds the report from fully merged partials.
    pub fn finish(
        &self,
        job: &AnalysisJob<'_>,
        grid: &WindowGrid,
    ) -> Result<AnalysisReport, EngineError> {
        let config = &job.config;
        let on = |a| job.analyses.contains(&a);
        if job.strictness == Strictness::Strict {
            if let Some(r) = &self.resources {
                if r.usage_spanning() > 0 {
                    return Err(EngineError::SpanningUsage {
                        count: r.usage_spanning(),
                    });
                }
            }
        }
        let heterogeneity = self.heterogeneity.as_ref().map(|h| h.finish(config));
        let lifecycle = self.lifecycle.as_ref().map(|l| l.finish(config));
        let resources_section = self.resources.as_ref().map(|r| r.finish(grid, config));
        let cluster = match (&self.cluster, &self.resources) {
            (Some(c), Some(r)) => Some(c.finish(grid, &r.usage_window_sums())?),
            _ => None,
        };
        let data_quality = DataQuality {
            rejected_lines: job.bundle.provenance.rejected_lines,
            day_exclusions: self
                .heterogeneity
                .as_ref()
                .map_or(0, HeterogeneityPartial::day_exclusions),
            censored_jobs: lifecycle.as_ref().map_or(0, |l| l.durations.censored),
            malformed_jobs: lifecycle.as_ref().map_or(0, |l| l.durations.malformed),
            jobs_without_start: lifecycle.as_ref().map_or(0, |l| l.durations.without_start),
            usage_sentinel_excluded: resources_section
                .as_ref()
                .map_or(0, |r| r.usage_sentinel_excluded),
            usage_spanning: resources_section.as_ref().map_or(0, |r| r.usage_spanning),
            zero_capacity_windows: cluster.as_ref().map_or(0, |c| c.zero_capacity_windows),
            overcommitted_windows: cluster.as_ref().map_or(0, |c| c.overcommitted_windows),
            remove_without_add: cluster.as_ref().map_or(0, |c| c.remove_without_add),
            partial_last_day: grid.has_partial_last_day(),
        };
        let metadata = ReportMetadata::new(job.bundle, config, grid, &job.analyses);
        let report = AnalysisReport {
            digest: String::new(),
            metadata,
            heterogeneity,
            lifecycle,
            resources: if on(Analysis::Resources) {
                resources_section
            } else {
                None
            },
            cluster,
            data_quality,
        };
        Ok(report.with_digest())
    }
}

fn panic_message(payload: Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        s.to_string()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "worker panicked".to_string()
    }
}

/// Output of [`run_partials`]: merged partials and the number of merges.
#[derive(Debug, Clone)]
pub struct MergedPartials {
    pub merged: PartialReport,
    pub merges: usize,
}

/// Folds every partition on a pool of `worker_count` threads and merges the
/// partials in partition order.
pub fn run_partials(job: &AnalysisJob<'_>, grid: &WindowGrid) -> Result<MergedPartials, EngineError> {
    job.validate()?;
    let n = job.effective_partitions();
    let inputs = split_bundle(job.bundle, n);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(job.worker_count)
        .build()
        .map_err(|e| EngineError::InvalidJob(e.to_string()))?;
    let partials: Vec<PartialReport> = pool.install(|| {
        inputs
            .par_iter()
            .enumerate()
            .map(|(index, input)| {
                catch_unwind(AssertUnwindSafe(|| {
                    if job.fail_partition == Some(index) {
                        panic!("injected failure");
                    }
                    PartialReport::fold(input, &job.analyses, grid, &job.config)
                }))
                .map_err(|payload| EngineError::WorkerFailed {
                    partition: index,
                    message: panic_message(payload),
                })
            })
            .collect::<Result<Vec<_>, _>>()
    })?;
    let mut iter = partials.into_iter();
    let mut merged = iter.next().expect("at least one partition");
    let mut merges = 0;
    for p in iter {
        merged.merge(&p);
        merges += 1;
    }
    Ok(MergedPartials { merged, merges })
}

/// Runs every enabled analysis. The report is identical for any worker or
/// partition count.
pub fn run(job: &AnalysisJob<'_>) -> Result<AnalysisReport, EngineError> {
    let grid = job.grid();
    let merged = run_partials(job, &grid)?;
    merged.merged.finish(job, &grid)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub worker_count: usize,
    pub median_seconds: f64,
    pub seconds: Vec<f64>,
    pub partial_merges: usize,
    pub digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingResult {
    pub rows: Vec<ScalingRow>,
    /// Cores the host reports; worker counts above it share cores.
    pub host_cores: usize,
}

impl ScalingResult {
    pub fn row(&self, worker_count: usize) -> Option<&ScalingRow> {
        self.rows.iter().find(|r| r.worker_count == worker_count)
    }

    pub fn digests_agree(&self) -> bool {
        self.rows.windows(2).all(|w| w[0].digest == w[1].digest)
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Times `run` for each worker count, `repetitions` times each, and checks
/// that every run yields the same report digest.
pub fn scaling_benchmark(
    job: &AnalysisJob<'_>,
    worker_counts: &[usize],
    repetitions: usize,
) -> Result<ScalingResult, EngineError> {
    if worker_counts.is_empty() || !worker_counts.windows(2).all(|w| w[0] < w[1]) {
        return Err(EngineError::InvalidJob(
            "worker counts must be non-empty and strictly ascending".into(),
        ));
    }
    if repetitions < 3 {
        return Err(EngineError::InvalidJob("repetitions must be at least 3".into()));
    }
    let grid = job.grid();
    let mut rows = Vec::new();
    for &w in worker_counts {
        let run_job = job.clone().workers(w);
        let mut seconds = Vec::with_capacity(repetitions);
        let mut digest = None;
        let mut merges = 0;
        for _ in 0..repetitions {
            let t0 = Instant::now();
            let merged = run_partials(&run_job, &grid)?;
            let report = merged.merged.finish(&run_job, &grid)?;
            seconds.push(t0.elapsed().as_secs_f64());
            merges = merged.merges;
            match &digest {
                None => digest = Some(report.digest),
                Some(d) if *d != report.digest => {
                    return Err(EngineError::DigestMismatch(vec![
                        (w, d.clone()),
                        (w, report.digest),
                    ]))
                }
                _ => {}
            }
        }
        rows.push(ScalingRow {
            worker_count: w,
            median_seconds: median(&seconds),
            seconds,
            partial_merges: merges,
            digest: digest.expect("repetitions >= 3"),
        });
    }
    let host_cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    let result = ScalingResult { rows, host_cores };
    if !result.digests_agree() {
        return Err(EngineError::DigestMismatch(
            result
                .rows
                .iter()
                .map(|r| (r.worker_count, r.digest.clone()))
                .collect(),
        ));
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::{assemble_bundle, Provenance};
    use crate::model::*;

    const S: Micros = MICROS_PER_SECOND;

    fn bundle() -> TraceBundle {
        let mut c = Vec::new();
        let mut i = Vec::new();
        let mut u = Vec::new();
        for id in 1..=40u64 {
            let t0 = 600 * S + id * 977 * S;
            for (k, et) in [EventType::Submit, EventType::Schedule, EventType::Finish]
                .into_iter()
                .enumerate()
            {
                c.push(CollectionEvent {
                    time: t0 + k as u64 * 400 * S,
                    collection_id: id,
                    event_type: et,
                    collection_type: CollectionType::Job,
                    priority: (id * 37 % 400) as i32,
                    alloc_collection_id: None,
                    parent_collection_id: None,
                    max_per_machine: None,
                    max_per_switch: None,
                    vertical_scaling: VerticalScaling::Off,
                });
                i.push(InstanceEvent {
                    time: t0 + k as u64 * 400 * S,
                    collection_id: id,
                    instance_index: 0,
                    event_type: et,
                    instance_type: InstanceType::Task,
                    machine_id: Some(id % 5),
                    priority: 100,
                    alloc_collection_id: None,
                    resource_request: Resources::new(0.1 * id as f64, 0.03),
                });
            }
            u.push(UsageRecord {
                start_time: t0 + 400 * S,
                end_time: t0 + 500 * S,
                collection_id: id,
                instance_index: 0,
                machine_id: id % 5,
                average_usage: Resources::new(0.07 * id as f64, 0.01),
            });
        }
        let m = (0..5)
            .map(|id| MachineEvent {
                time: 600 * S,
                machine_id: id,
                event_type: MachineEventType::Add,
                capacity: Resources::new(0.7, 0.3),
            })
            .collect();
        assemble_bundle(c, i, u, m, Provenance::default()).unwrap()
    }

    #[test]
    fn worker_and_partition_count_do_not_change_the_report() {
        let b = bundle();
        let base = run(&AnalysisJob::new(&b, AnalysisConfig::default())).unwrap();
        for w in [1, 2, 4, 8] {
            for p in [1, 3, 16] {
                let job = AnalysisJob::new(&b, AnalysisConfig::default()).workers(w).partitions(p);
                assert_eq!(run(&job).unwrap(), base, "workers {w} partitions {p}");
            }
        }
    }

    #[test]
    fn incompatible_key_is_rejected() {
        let b = bundle();
        let job = AnalysisJob::new(&b, AnalysisConfig::default())
            .partition_key(Analysis::Lifecycle, PartitionKey::Machine);
        assert!(matches!(
            run(&job),
            Err(EngineError::IncompatiblePartitionKey { analysis: "lifecycle", .. })
        ));
    }

    #[test]
    fn worker_failure_names_partition() {
        let b = bundle();
        let mut job = AnalysisJob::new(&b, AnalysisConfig::default()).partitions(6);
        job.fail_partition = Some(4);
        match run(&job) {
            Err(EngineError::WorkerFailed { partition, .. }) => assert_eq!(partition, 4),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn subset_of_analyses() {
        let b = bundle();
        let job = AnalysisJob::new(&b, AnalysisConfig::default()).only([Analysis::Cluster]);
        let r = run(&job).unwrap();
        assert!(r.cluster.is_some());
        assert!(r.resources.is_none() && r.lifecycle.is_none() && r.heterogeneity.is_none());
    }

    #[test]
    fn benchmark_rows() {
        let b = bundle();
        let job = AnalysisJob::new(&b, AnalysisConfig::default());
        let res = scaling_benchmark(&job, &[1, 2, 4], 3).unwrap();
        assert_eq!(res.rows.len(), 3);
        assert!(res.digests_agree());
        assert_eq!(res.rows[0].seconds.len(), 3);
        assert!(scaling_benchmark(&job, &[2, 1], 3).is_err());
        assert!(scaling_benchmark(&job, &[1], 2).is_err());
    }

    #[test]
    fn median_of_values() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
