//! Machine availability, capacity against usage, and the utilization CDF.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::resources::{add_step_function_from, DailyResourceSeries, WindowDeltas};
use crate::error::AnalysisError;
use crate::grid::WindowGrid;
use crate::model::{MachineEvent, MachineEventType, Micros, Resources, AFTER_TRACE};

/// Presence intervals and capacity history of one machine.
#[derive(Debug, Clone, PartialEq)]
pub struct MachineTimeline {
    pub machine_id: u64,
    /// Non-overlapping `[from, to)` intervals in time order.
    pub presence: Vec<(Micros, Micros)>,
    /// `(time, capacity)` steps in time order.
    pub capacity: Vec<(Micros, Resources)>,
    /// REMOVE events seen while the machine was absent.
    pub remove_without_add: u64,
}

impl MachineTimeline {
    /// Replays one machine's events. Timestamps are clamped into the
    /// horizon; a machine first seen through REMOVE or UPDATE is taken to be
    /// present from the origin.
    pub fn from_events(machine_id: u64, events: &[&MachineEvent], grid: &WindowGrid) -> Self {
        let beyond = grid.end.saturating_add(1);
        let clamp = |t: Micros| {
            if t == AFTER_TRACE {
                beyond
            } else {
                t.clamp(grid.origin, beyond)
            }
        };
        let mut sorted: Vec<&MachineEvent> = events.to_vec();
        sorted.sort_by_key(|e| (clamp(e.time), e.event_type.code()));

        let mut tl = MachineTimeline {
            machine_id,
            presence: Vec::new(),
            capacity: Vec::new(),
            remove_without_add: 0,
        };
        let mut open: Option<Micros> = None;
        let mut seen = false;
        for e in sorted {
            let t = clamp(e.time);
            match e.event_type {
                MachineEventType::Add => {
                    if open.is_none() {
                        open = Some(t);
                    }
                    tl.capacity.push((t, e.capacity));
                }
                MachineEventType::Remove => match open.take() {
                    Some(from) => tl.presence.push((from, t)),
                    None => {
                        tl.remove_without_add += 1;
                        if !seen {
                            tl.presence.push((grid.origin, t));
                        }
                    }
                },
                MachineEventType::Update => {
                    if !seen {
                        open = Some(grid.origin);
                        tl.capacity.push((grid.origin, e.capacity));
                    } else {
                        tl.capacity.push((t, e.capacity));
                    }
                }
            }
            seen = true;
        }
        if let Some(from) = open {
            tl.presence.push((from, beyond));
        }
        tl.presence.retain(|(a, b)| a < b);
        tl
    }

    /// Days any presence interval overlaps, ascending and without repeats.
    pub fn days_present(&self, grid: &WindowGrid) -> Vec<u64> {
        let mut days: Vec<u64> = self
            .presence
            .iter()
            .flat_map(|&(a, b)| grid.days_overlapping(a, b))
            .collect();
        days.dedup();
        days
    }

    /// Adds capacity in force to every window the machine is present in. A
    /// window shared by two presence intervals counts once, valued by the
    /// earlier interval.
    pub fn add_capacity(&self, grid: &WindowGrid, deltas: &mut WindowDeltas) {
        let mut next = 0;
        for &(a, b) in &self.presence {
            add_step_function_from(&self.capacity, (a, b), next, grid, deltas);
            next = next.max(grid.windows_overlapping(a, b).end);
        }
    }
}

pub fn build_machine_timelines<'a>(
    events: impl IntoIterator<Item = &'a MachineEvent>,
    grid: &WindowGrid,
) -> Vec<MachineTimeline> {
    let mut by_machine: BTreeMap<u64, Vec<&MachineEvent>> = BTreeMap::new();
    for e in events {
        by_machine.entry(e.machine_id).or_default().push(e);
    }
    by_machine
        .into_iter()
        .map(|(id, evs)| MachineTimeline::from_events(id, &evs, grid))
        .collect()
}

/// Machines present at some point of each day.
pub fn machines_per_day(events: &[MachineEvent], grid: &WindowGrid) -> Vec<u64> {
    let mut counts = vec![0; grid.day_count as usize];
    for tl in build_machine_timelines(events, grid) {
        for d in tl.days_present(grid) {
            counts[d as usize] += 1;
        }
    }
    counts
}

/// Per-window sum of capacity over present machines.
pub fn capacity_window_sums(events: &[MachineEvent], grid: &WindowGrid) -> Vec<Resources> {
    let mut deltas = WindowDeltas::new(grid.window_count);
    for tl in build_machine_timelines(events, grid) {
        tl.add_capacity(grid, &mut deltas);
    }
    deltas.window_sums()
}

/// Daily average of the per-window capacity sums.
pub fn capacity_per_day(events: &[MachineEvent], grid: &WindowGrid) -> DailyResourceSeries {
    DailyResourceSeries::from_window_sums(&capacity_window_sums(events, grid), grid)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayUtilization {
    pub day: u64,
    /// `None` where the day's capacity is zero.
    pub cpus: Option<f64>,
    pub memory: Option<f64>,
}

fn ratio(usage: f64, capacity: f64) -> Option<f64> {
    (capacity != 0.0).then(|| usage / capacity)
}

/// Component-wise usage over capacity for each day.
pub fn usage_vs_capacity(
    usage: &DailyResourceSeries,
    capacity: &DailyResourceSeries,
) -> Result<Vec<DayUtilization>, AnalysisError> {
    if usage.days.len() != capacity.days.len() {
        return Err(AnalysisError::SeriesLengthMismatch {
            usage: usage.days.len(),
            capacity: capacity.days.len(),
        });
    }
    Ok(usage
        .days
        .iter()
        .zip(&capacity.days)
        .map(|(u, c)| DayUtilization {
            day: u.day,
            cpus: ratio(u.cpus, c.cpus),
            memory: ratio(u.memory, c.memory),
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UtilizationSeries {
    Cpus,
    Memory,
    /// The larger of the cpu and memory utilization.
    Combined,
}

impl UtilizationSeries {
    pub const ALL: [UtilizationSeries; 3] = [Self::Cpus, Self::Memory, Self::Combined];

    pub fn name(self) -> &'static str {
        match self {
            Self::Cpus => "cpus",
            Self::Memory => "memory",
            Self::Combined => "combined",
        }
    }

    /// Utilization of one window; `None` if a capacity it needs is zero.
    pub fn of(self, usage: Resources, capacity: Resources) -> Option<f64> {
        let cpu = ratio(usage.cpus, capacity.cpus);
        let mem = ratio(usage.memory, capacity.memory);
        match self {
            Self::Cpus => cpu,
            Self::Memory => mem,
            Self::Combined => Some(cpu?.max(mem?)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdfPoint {
    pub x: f64,
    pub p: f64,
}

/// Empirical CDF: one point per distinct sample value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilizationCdf {
    pub series: UtilizationSeries,
    pub points: Vec<CdfPoint>,
    pub included: u64,
    /// Windows left out for zero capacity.
    pub excluded: u64,
}

/// Empirical CDF of `samples`, `p(x)` = share of samples at most `x`.
pub fn empirical_cdf(samples: &[f64]) -> Vec<CdfPoint> {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut points: Vec<CdfPoint> = Vec::new();
    for (i, &x) in sorted.iter().enumerate() {
        let p = (i + 1) as f64 / n;
        match points.last_mut() {
            Some(last) if last.x == x => last.p = p,
            _ => points.push(CdfPoint { x, p }),
        }
    }
    points
}

/// CDF of per-window utilization for one series.
pub fn utilization_cdf(
    usage: &[Resources],
    capacity: &[Resources],
    series: UtilizationSeries,
) -> Result<UtilizationCdf, AnalysisError> {
    if usage.len() != capacity.len() {
        return Err(AnalysisError::WindowMismatch {
            usage: usage.len(),
            capacity: capacity.len(),
        });
    }
    let samples: Vec<f64> = usage
        .iter()
        .zip(capacity)
        .filter_map(|(&u, &c)| series.of(u, c))
        .collect();
    Ok(UtilizationCdf {
        series,
        points: empirical_cdf(&samples),
        included: samples.len() as u64,
        excluded: (usage.len() - samples.len()) as u64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSection {
    pub machines: u64,
    pub machines_per_day: Vec<u64>,
    pub capacity: DailyResourceSeries,
    pub utilization_per_day: Vec<DayUtilization>,
    pub cdf: Vec<UtilizationCdf>,
    pub remove_without_add: u64,
    /// Windows with a zero cpu or memory capacity.
    pub zero_capacity_windows: u64,
    /// Windows whose usage exceeds capacity in either resource.
    pub overcommitted_windows: u64,
}

/// Partial aggregate over one machine-keyed partition.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterPartial {
    machines: u64,
    machines_per_day: Vec<u64>,
    capacity: WindowDeltas,
    remove_without_add: u64,
}

impl ClusterPartial {
    pub fn new(grid: &WindowGrid) -> Self {
        ClusterPartial {
            machines: 0,
            machines_per_day: vec![0; grid.day_count as usize],
            capacity: WindowDeltas::new(grid.window_count),
            remove_without_add: 0,
        }
    }

    pub fn fold(events: &[&MachineEvent], grid: &WindowGrid) -> Self {
        let mut p = Self::new(grid);
        for tl in build_machine_timelines(events.iter().copied(), grid) {
            p.machines += 1;
            p.remove_without_add += tl.remove_without_add;
            for d in tl.days_present(grid) {
                p.machines_per_day[d as usize] += 1;
            }
            tl.add_capacity(grid, &mut p.capacity);
        }
        p
    }

    pub fn merge(&mut self, other: &ClusterPartial) {
        self.machines += other.machines;
        for (a, b) in self.machines_per_day.iter_mut().zip(&other.machines_per_day) {
            *a += b;
        }
        self.capacity.merge(&other.capacity);
        self.remove_without_add += other.remove_without_add;
    }

    pub fn capacity_window_sums(&self) -> Vec<Resources> {
        self.capacity.window_sums()
    }

    /// Combines with the per-window usage sums from the resources analysis.
    pub fn finish(
        &self,
        grid: &WindowGrid,
        usage_windows: &[Resources],
    ) -> Result<ClusterSection, AnalysisError> {
        let capacity_windows = self.capacity_window_sums();
        let capacity = DailyResourceSeries::from_window_sums(&capacity_windows, grid);
        let usage = DailyResourceSeries::from_window_sums(usage_windows, grid);
        let cdf = UtilizationSeries::ALL
            .iter()
            .map(|&s| utilization_cdf(usage_windows, &capacity_windows, s))
            .collect::<Result<Vec<_>, _>>()?;
        let zero_capacity_windows = capacity_windows
            .iter()
            .filter(|c| c.cpus == 0.0 || c.memory == 0.0)
            .count() as u64;
        let overcommitted_windows = usage_windows
            .iter()
            .zip(&capacity_windows)
            .filter(|(u, c)| u.cpus > c.cpus || u.memory > c.memory)
            .count() as u64;
        Ok(ClusterSection {
            machines: self.machines,
            machines_per_day: self.machines_per_day.clone(),
            utilization_per_day: usage_vs_capacity(&usage, &capacity)?,
            capacity,
            cdf,
            remove_without_add: self.remove_without_add,
            zero_capacity_windows,
            overcommitted_windows,
        })
    }
}
