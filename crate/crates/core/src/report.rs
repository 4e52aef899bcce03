//! The analysis report, its digest and the plot-data files.

use std::collections::BTreeSet;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::cluster::ClusterSection;
use crate::analysis::heterogeneity::HeterogeneitySection;
use crate::analysis::lifecycle::LifecycleSection;
use crate::analysis::resources::ResourcesSection;
use crate::analysis::CategoricalDistribution;
use crate::config::AnalysisConfig;
use crate::digest::sha256_hex;
use crate::engine::{Analysis, ScalingResult};
use crate::grid::WindowGrid;
use crate::io::{TableCounts, TraceBundle};
use crate::model::{
    EventType, JobSizeBin, Micros, PriorityTier, TierBoundaries, VerticalScaling,
};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub const REPORT_FILE: &str = "report.json";
pub const SCALING_FILE: &str = "fig9_scaling.csv";

/// Every file `write_outputs` produces for a full report, in write order.
pub const OUTPUT_FILES: [&str; 14] = [
    REPORT_FILE,
    "fig2_event_types.csv",
    "fig3a_events_per_day.csv",
    "fig3b_tiers_per_day.csv",
    "table1_tiers.csv",
    "table2_max_per_machine.csv",
    "table3_vertical_scaling.csv",
    "table4_job_sizes.csv",
    "table5_final_states.csv",
    "fig4_state_means.csv",
    "fig5_requests_usage.csv",
    "fig6_machines.csv",
    "fig7_util_per_day.csv",
    "fig8_cdf.csv",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub tool_version: String,
    pub bundle_digest: String,
    pub config: AnalysisConfig,
    pub analyses: Vec<Analysis>,
    pub trace_start: Micros,
    pub trace_end: Micros,
    pub day_count: u64,
    pub window_count: u64,
    pub windows_per_day: u64,
    pub record_counts: TableCounts,
}

impl ReportMetadata {
    pub fn new(
        bundle: &TraceBundle,
        config: &AnalysisConfig,
        grid: &WindowGrid,
        analyses: &BTreeSet<Analysis>,
    ) -> Self {
        ReportMetadata {
            tool_version: TOOL_VERSION.to_string(),
            bundle_digest: bundle.digest().to_string(),
            config: config.clone(),
            analyses: analyses.iter().copied().collect(),
            trace_start: bundle.trace_start,
            trace_end: bundle.trace_end,
            day_count: grid.day_count,
            window_count: grid.window_count,
            windows_per_day: grid.windows_per_day,
            record_counts: bundle.provenance.record_counts.clone(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataQuality {
    pub rejected_lines: u64,
    /// Collection events whose day could not be determined.
    pub day_exclusions: u64,
    pub censored_jobs: u64,
    pub malformed_jobs: u64,
    pub jobs_without_start: u64,
    pub usage_sentinel_excluded: u64,
    pub usage_spanning: u64,
    pub zero_capacity_windows: u64,
    pub overcommitted_windows: u64,
    pub remove_without_add: u64,
    pub partial_last_day: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    /// SHA-256 of the pretty JSON serialization with this field empty.
    pub digest: String,
    pub metadata: ReportMetadata,
    pub heterogeneity: Option<HeterogeneitySection>,
    pub lifecycle: Option<LifecycleSection>,
    pub resources: Option<ResourcesSection>,
    pub cluster: Option<ClusterSection>,
    pub data_quality: DataQuality,
}

impl AnalysisReport {
    pub fn compute_digest(&self) -> String {
        let mut unsigned = self.clone();
        unsigned.digest.clear();
        sha256_hex(unsigned.to_json().as_bytes())
    }

    pub fn with_digest(mut self) -> Self {
        self.digest = self.compute_digest();
        self
    }

    pub fn verify_digest(&self) -> bool {
        self.digest == self.compute_digest()
    }

    /// Pretty JSON with a trailing newline; the exact bytes of `report.json`.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    /// Writes `report.json` and one CSV per present figure or table into
    /// `dir`, returning the paths written.
    pub fn write_outputs(&self, dir: &Path) -> io::Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        let mut put = |name: &str, bytes: Vec<u8>| -> io::Result<()> {
            let path = dir.join(name);
            fs::write(&path, bytes)?;
            written.push(path);
            Ok(())
        };
        put(REPORT_FILE, self.to_json().into_bytes())?;
        if let Some(h) = &self.heterogeneity {
            put("fig2_event_types.csv", event_types_csv(h)?)?;
            put("fig3a_events_per_day.csv", daily_csv(&h.collection_events_per_day)?)?;
            put("fig3b_tiers_per_day.csv", daily_csv(&h.tiers_per_day)?)?;
            put(
                "table1_tiers.csv",
                tiers_csv(&h.job_tiers, &self.metadata.config.tier_boundaries)?,
            )?;
            put("table2_max_per_machine.csv", fields_csv(h)?)?;
            put("table3_vertical_scaling.csv", vertical_scaling_csv(&h.vertical_scaling)?)?;
            put("table4_job_sizes.csv", job_sizes_csv(&h.job_sizes)?)?;
        }
        if let Some(l) = &self.lifecycle {
            put("table5_final_states.csv", final_states_csv(l)?)?;
            put("fig4_state_means.csv", state_means_csv(l)?)?;
        }
        if let Some(r) = &self.resources {
            put("fig5_requests_usage.csv", requests_usage_csv(r)?)?;
        }
        if let Some(c) = &self.cluster {
            put("fig6_machines.csv", machines_csv(c)?)?;
            put("fig7_util_per_day.csv", util_per_day_csv(c)?)?;
            put("fig8_cdf.csv", cdf_csv(c)?)?;
        }
        Ok(written)
    }
}

fn csv_bytes<const N: usize>(header: [&str; N], rows: Vec<Vec<String>>) -> io::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.into_inner().map_err(|e| e.into_error())
}

fn dyn_csv(header: Vec<String>, rows: Vec<Vec<String>>) -> io::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.into_inner().map_err(|e| e.into_error())
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

fn event_types_csv(h: &HeterogeneitySection) -> io::Result<Vec<u8>> {
    let rows = EventType::ALL
        .iter()
        .map(|e| {
            let (c, i) = (&h.collection_event_types, &h.instance_event_types);
            vec![
                e.code().to_string(),
                e.name().to_string(),
                c.count(e.name()).to_string(),
                c.fraction(e.name()).to_string(),
                i.count(e.name()).to_string(),
                i.fraction(e.name()).to_string(),
            ]
        })
        .collect();
    csv_bytes(
        [
            "code",
            "event_type",
            "collection_events",
            "collection_fraction",
            "instance_events",
            "instance_fraction",
        ],
        rows,
    )
}

fn daily_csv(series: &crate::analysis::DailySeries) -> io::Result<Vec<u8>> {
    let header = std::iter::once("day".to_string())
        .chain(series.labels.iter().cloned())
        .collect();
    let rows = series
        .days
        .iter()
        .enumerate()
        .map(|(d, counts)| {
            std::iter::once(d.to_string())
                .chain(counts.iter().map(u64::to_string))
                .collect()
        })
        .collect();
    dyn_csv(header, rows)
}

fn range_label(bounds: &TierBoundaries, tier: PriorityTier) -> String {
    match bounds.interval(tier) {
        (None, Some(hi)) => format!("<={}", hi - 1),
        (Some(lo), Some(hi)) if hi - 1 == lo => lo.to_string(),
        (Some(lo), Some(hi)) => format!("{lo}-{}", hi - 1),
        (Some(lo), None) => format!(">={lo}"),
        (None, None) => "all".to_string(),
    }
}

fn tiers_csv(d: &CategoricalDistribution, bounds: &TierBoundaries) -> io::Result<Vec<u8>> {
    let rows = PriorityTier::ALL
        .iter()
        .map(|t| {
            vec![
                t.index().to_string(),
                t.name().to_string(),
                range_label(bounds, *t),
                d.count(t.name()).to_string(),
                d.fraction(t.name()).to_string(),
            ]
        })
        .collect();
    csv_bytes(["tier_index", "tier", "priority_range", "jobs", "fraction"], rows)
}

fn fields_csv(h: &HeterogeneitySection) -> io::Result<Vec<u8>> {
    let mut rows = Vec::new();
    for (field, d) in [
        ("alloc_hosting", &h.alloc_hosting),
        ("max_per_machine", &h.max_per_machine),
        ("max_per_switch", &h.max_per_switch),
        ("parent_presence", &h.parent_presence),
    ] {
        for b in &d.buckets {
            rows.push(vec![
                field.to_string(),
                b.label.clone(),
                b.count.to_string(),
                b.fraction.to_string(),
            ]);
        }
    }
    csv_bytes(["field", "value", "collections", "fraction"], rows)
}

fn vertical_scaling_csv(d: &CategoricalDistribution) -> io::Result<Vec<u8>> {
    let rows = VerticalScaling::ALL
        .iter()
        .map(|v| {
            vec![
                v.code().to_string(),
                v.name().to_string(),
                d.count(v.name()).to_string(),
                d.fraction(v.name()).to_string(),
            ]
        })
        .collect();
    csv_bytes(["code", "setting", "collections", "fraction"], rows)
}

fn job_sizes_csv(d: &CategoricalDistribution) -> io::Result<Vec<u8>> {
    let rows = JobSizeBin::ALL
        .iter()
        .map(|b| {
            vec![
                b.code().to_string(),
                b.name().to_string(),
                d.count(b.name()).to_string(),
                d.fraction(b.name()).to_string(),
            ]
        })
        .collect();
    csv_bytes(["bin", "tasks", "jobs", "fraction"], rows)
}

fn final_states_csv(l: &LifecycleSection) -> io::Result<Vec<u8>> {
    let mut rows = Vec::new();
    for t in &l.final_states_by_tier {
        for e in EventType::ALL {
            let n = t.final_states.count(e.name());
            if n > 0 {
                rows.push(vec![
                    t.tier.index().to_string(),
                    t.tier.name().to_string(),
                    e.name().to_string(),
                    n.to_string(),
                    t.final_states.fraction(e.name()).to_string(),
                ]);
            }
        }
    }
    csv_bytes(["tier_index", "tier", "final_state", "jobs", "fraction"], rows)
}

fn state_means_csv(l: &LifecycleSection) -> io::Result<Vec<u8>> {
    let rows = l
        .state_durations
        .states
        .iter()
        .map(|s| {
            vec![
                s.state.code().to_string(),
                s.state.name().to_string(),
                s.count.to_string(),
                opt(s.mean_seconds),
                opt(s.min_seconds),
                opt(s.max_seconds),
            ]
        })
        .collect();
    csv_bytes(
        ["code", "state", "samples", "mean_seconds", "min_seconds", "max_seconds"],
        rows,
    )
}

fn requests_usage_csv(r: &ResourcesSection) -> io::Result<Vec<u8>> {
    let rows = r
        .requested
        .days
        .iter()
        .zip(&r.consumed.days)
        .map(|(q, u)| {
            vec![
                q.day.to_string(),
                q.windows.to_string(),
                q.cpus.to_string(),
                q.memory.to_string(),
                u.cpus.to_string(),
                u.memory.to_string(),
            ]
        })
        .collect();
    csv_bytes(
        [
            "day",
            "windows",
            "requested_cpus",
            "requested_memory",
            "consumed_cpus",
            "consumed_memory",
        ],
        rows,
    )
}

fn machines_csv(c: &ClusterSection) -> io::Result<Vec<u8>> {
    let rows = c
        .machines_per_day
        .iter()
        .zip(&c.capacity.days)
        .enumerate()
        .map(|(d, (m, cap))| {
            vec![
                d.to_string(),
                m.to_string(),
                cap.cpus.to_string(),
                cap.memory.to_string(),
            ]
        })
        .collect();
    csv_bytes(["day", "machines", "capacity_cpus", "capacity_memory"], rows)
}

fn util_per_day_csv(c: &ClusterSection) -> io::Result<Vec<u8>> {
    let rows = c
        .utilization_per_day
        .iter()
        .zip(&c.capacity.days)
        .map(|(u, cap)| {
            vec![
                u.day.to_string(),
                cap.cpus.to_string(),
                cap.memory.to_string(),
                opt(u.cpus),
                opt(u.memory),
            ]
        })
        .collect();
    csv_bytes(
        [
            "day",
            "capacity_cpus",
            "capacity_memory",
            "utilization_cpus",
            "utilization_memory",
        ],
        rows,
    )
}

fn cdf_csv(c: &ClusterSection) -> io::Result<Vec<u8>> {
    let mut cdfs: Vec<_> = c.cdf.iter().collect();
    cdfs.sort_by_key(|cdf| cdf.series.name());
    let rows = cdfs
        .iter()
        .flat_map(|cdf| {
            cdf.points.iter().map(|p| {
                vec![
                    cdf.series.name().to_string(),
                    p.x.to_string(),
                    p.p.to_string(),
                ]
            })
        })
        .collect();
    csv_bytes(["series", "x", "p"], rows)
}

/// `fig9_scaling.csv` contents.
pub fn scaling_csv(result: &ScalingResult) -> io::Result<Vec<u8>> {
    let rows = result
        .rows
        .iter()
        .map(|r| {
            vec![
                r.worker_count.to_string(),
                r.median_seconds.to_string(),
                r.digest.clone(),
                result.host_cores.to_string(),
            ]
        })
        .collect();
    csv_bytes(["worker_count", "median_seconds", "digest", "host_cores"], rows)
}
