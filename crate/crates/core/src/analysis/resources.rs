//! Requested and consumed CPU and memory, summed per window and averaged
//! per day.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::config::AnalysisConfig;
use crate::grid::WindowGrid;
use crate::model::{
    is_sentinel, EventType, InstanceEvent, InstanceType, Micros, Resources, UsageRecord,
};
use crate::sum::{ExactSum, ResourceSum};

/// Running interval and request history of one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceTimeline {
    pub collection_id: u64,
    pub instance_index: u32,
    pub instance_type: InstanceType,
    /// `[schedule, terminal)`; open-ended instances run past the horizon end.
    pub running: Option<(Micros, Micros)>,
    /// Non-sentinel `(time, request)` pairs in event order.
    pub requests: Vec<(Micros, Resources)>,
}

impl InstanceTimeline {
    fn from_events(events: &mut [&InstanceEvent], grid: &WindowGrid) -> Self {
        events.sort_by_key(|e| (e.time, e.event_type.code()));
        let first = events[0];
        let start = events
            .iter()
            .find(|e| e.event_type == EventType::Schedule && !is_sentinel(e.time))
            .map(|e| e.time);
        let running = start.map(|s| {
            let end = events
                .iter()
                .find(|e| e.event_type.is_terminal() && !is_sentinel(e.time) && e.time >= s)
                .map_or(grid.end.saturating_add(1), |e| e.time);
            (s, end)
        });
        InstanceTimeline {
            collection_id: first.collection_id,
            instance_index: first.instance_index,
            instance_type: first.instance_type,
            running,
            requests: events
                .iter()
                .filter(|e| !is_sentinel(e.time))
                .map(|e| (e.time, e.resource_request))
                .collect(),
        }
    }

    /// Request from the latest event at or before `t`.
    pub fn request_at(&self, t: Micros) -> Option<Resources> {
        let n = self.requests.partition_point(|(et, _)| *et <= t);
        n.checked_sub(1).map(|i| self.requests[i].1)
    }

    /// Windows overlapping the running interval.
    pub fn running_windows(&self, grid: &WindowGrid) -> std::ops::Range<u64> {
        match self.running {
            Some((s, e)) => grid.windows_overlapping(s, e),
            None => 0..0,
        }
    }

    /// Request in force for window `w`: evaluated at the later of the window
    /// start and the schedule time.
    pub fn request_for_window(&self, w: u64, grid: &WindowGrid) -> Option<Resources> {
        let (s, _) = self.running?;
        self.request_at(grid.window_start(w).max(s))
    }
}

/// Builds one timeline per `(collection_id, instance_index)`.
pub fn build_instance_timelines<'a>(
    events: impl IntoIterator<Item = &'a InstanceEvent>,
    grid: &WindowGrid,
) -> BTreeMap<(u64, u32), InstanceTimeline> {
    let mut by_instance: BTreeMap<(u64, u32), Vec<&InstanceEvent>> = BTreeMap::new();
    for e in events {
        by_instance
            .entry((e.collection_id, e.instance_index))
            .or_default()
            .push(e);
    }
    by_instance
        .into_iter()
        .map(|(k, mut evs)| (k, InstanceTimeline::from_events(&mut evs, grid)))
        .collect()
}

/// Per-window sums stored as exact start/stop deltas, so long intervals cost
/// one entry per request change rather than one per window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowDeltas {
    deltas: Vec<ResourceSum>,
}

impl WindowDeltas {
    pub fn new(window_count: u64) -> Self {
        WindowDeltas {
            deltas: vec![ResourceSum::default(); window_count as usize + 1],
        }
    }

    fn push(&mut self, w: u64, r: Resources, sign: f64) {
        self.deltas[w as usize].add(r.scale(sign));
    }

    /// Adds `r` to every window in `range`.
    pub fn add_range(&mut self, range: std::ops::Range<u64>, r: Resources) {
        if range.is_empty() {
            return;
        }
        self.push(range.start, r, 1.0);
        self.push(range.end, r, -1.0);
    }

    pub fn merge(&mut self, other: &WindowDeltas) {
        for (a, b) in self.deltas.iter_mut().zip(&other.deltas) {
            a.merge(b);
        }
    }

    /// Correctly rounded sum for every window.
    pub fn window_sums(&self) -> Vec<Resources> {
        let mut running = ResourceSum::default();
        let n = self.deltas.len() - 1;
        self.deltas[..n]
            .iter()
            .map(|d| {
                running.merge(d);
                running.value()
            })
            .collect()
    }
}

/// Average window sum for one day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayResources {
    pub day: u64,
    pub windows: u64,
    pub cpus: f64,
    pub memory: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyResourceSeries {
    pub days: Vec<DayResources>,
}

impl DailyResourceSeries {
    /// Averages window sums per day over the day's in-horizon windows.
    pub fn from_window_sums(window_sums: &[Resources], grid: &WindowGrid) -> Self {
        let days = (0..grid.day_count)
            .map(|d| {
                let n = grid.windows_in_day(d);
                let first = (d * grid.windows_per_day) as usize;
                let mut sum = ResourceSum::default();
                for r in &window_sums[first..first + n as usize] {
                    sum.add(*r);
                }
                let total = sum.value();
                DayResources {
                    day: d,
                    windows: n,
                    cpus: total.cpus / n as f64,
                    memory: total.memory / n as f64,
                }
            })
            .collect();
        DailyResourceSeries { days }
    }

    pub fn get(&self, day: u64) -> Resources {
        let d = &self.days[day as usize];
        Resources::new(d.cpus, d.memory)
    }
}

/// Windows in which a usage record exceeded its instance's positive request.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exceedance {
    /// Usage records matched to a running instance with a request in force.
    pub compared: u64,
    pub cpus: u64,
    pub memory: u64,
    /// Usage records with no running instance in their window.
    pub unmatched: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourcesSection {
    pub requested: DailyResourceSeries,
    pub consumed: DailyResourceSeries,
    pub partial_last_day: bool,
    /// Instances with a zero request component in force in some window.
    pub unlimited_tasks: u64,
    pub exceedance: Exceedance,
    pub usage_records: u64,
    pub usage_sentinel_excluded: u64,
    pub usage_spanning: u64,
    pub include_alloc_instances: bool,
}

/// Partial aggregate over one collection-keyed partition.
#[derive(Debug, Clone, PartialEq)]
pub struct ResourcesPartial {
    requests: WindowDeltas,
    usage: Vec<ResourceSum>,
    unlimited_tasks: u64,
    exceedance: Exceedance,
    usage_records: u64,
    usage_sentinel_excluded: u64,
    usage_spanning: u64,
}

/// Adds a step function to every window overlapping `[start, end)`. The
/// value for a window is the latest change at or before the later of the
/// window start and `start`. Returns whether a value with a zero component
/// was in force in some window.
pub fn add_step_function(
    changes: &[(Micros, Resources)],
    interval: (Micros, Micros),
    grid: &WindowGrid,
    deltas: &mut WindowDeltas,
) -> bool {
    add_step_function_from(changes, interval, 0, grid, deltas)
}

/// [`add_step_function`] restricted to windows from `first_window` on.
pub fn add_step_function_from(
    changes: &[(Micros, Resources)],
    (start, end): (Micros, Micros),
    first_window: u64,
    grid: &WindowGrid,
    deltas: &mut WindowDeltas,
) -> bool {
    let overlap = grid.windows_overlapping(start, end);
    let range = overlap.start.max(first_window)..overlap.end;
    if range.is_empty() {
        return false;
    }
    let at = |t: Micros| {
        let n = changes.partition_point(|(ct, _)| *ct <= t);
        n.checked_sub(1).map(|i| changes[i].1)
    };
    let mut current = at(grid.window_start(range.start).max(start));
    let mut unlimited = false;
    let mut emit = |window_range: std::ops::Range<u64>, c: Option<Resources>| {
        if let Some(c) = c {
            unlimited |= c.has_unlimited_component();
            deltas.add_range(window_range, c);
        }
    };
    let mut from = range.start;
    for &(t, r) in changes {
        // First window whose evaluation point sees this change.
        let w = if t <= grid.origin {
            0
        } else {
            (t - grid.origin).div_ceil(grid.window_micros)
        };
        if w <= range.start || w >= range.end {
            continue;
        }
        if w > from {
            emit(from..w, current);
            from = w;
        }
        current = Some(r);
    }
    emit(from..range.end, current);
    unlimited
}

fn add_instance_requests(
    timeline: &InstanceTimeline,
    grid: &WindowGrid,
    deltas: &mut WindowDeltas,
) -> bool {
    match timeline.running {
        Some(interval) => add_step_function(&timeline.requests, interval, grid, deltas),
        None => false,
    }
}

impl ResourcesPartial {
    pub fn new(grid: &WindowGrid) -> Self {
        ResourcesPartial {
            requests: WindowDeltas::new(grid.window_count),
            usage: vec![ResourceSum::default(); grid.window_count as usize],
            unlimited_tasks: 0,
            exceedance: Exceedance::default(),
            usage_records: 0,
            usage_sentinel_excluded: 0,
            usage_spanning: 0,
        }
    }

    pub fn fold(
        instances: &[&InstanceEvent],
        usage: &[&UsageRecord],
        grid: &WindowGrid,
        config: &AnalysisConfig,
    ) -> Self {
        let mut p = Self::new(grid);
        let timelines = build_instance_timelines(instances.iter().copied(), grid);
        for t in timelines.values() {
            if t.instance_type == InstanceType::AllocInstance && !config.include_alloc_instances
            {
                continue;
            }
            if add_instance_requests(t, grid, &mut p.requests) {
                p.unlimited_tasks += 1;
            }
        }
        for u in usage {
            p.add_usage(u, grid, |w| {
                timelines
                    .get(&(u.collection_id, u.instance_index))
                    .filter(|t| t.running_windows(grid).contains(&w))
                    .and_then(|t| t.request_for_window(w, grid))
            });
        }
        p
    }

    fn add_usage(
        &mut self,
        u: &UsageRecord,
        grid: &WindowGrid,
        request: impl FnOnce(u64) -> Option<Resources>,
    ) {
        self.usage_records += 1;
        let Ok(w) = grid.window_index(u.start_time) else {
            self.usage_sentinel_excluded += 1;
            return;
        };
        if !is_sentinel(u.end_time)
            && u.end_time > u.start_time
            && (u.end_time - 1 - grid.origin) / grid.window_micros != w
        {
            self.usage_spanning += 1;
        }
        self.usage[w as usize].add(u.average_usage);
        match request(w) {
            Some(r) => {
                self.exceedance.compared += 1;
                if r.cpus > 0.0 && u.average_usage.cpus > r.cpus {
                    self.exceedance.cpus += 1;
                }
                if r.memory > 0.0 && u.average_usage.memory > r.memory {
                    self.exceedance.memory += 1;
                }
            }
            None => self.exceedance.unmatched += 1,
        }
    }

    pub fn merge(&mut self, other: &ResourcesPartial) {
        self.requests.merge(&other.requests);
        for (a, b) in self.usage.iter_mut().zip(&other.usage) {
            a.merge(b);
        }
        self.unlimited_tasks += other.unlimited_tasks;
        self.exceedance.compared += other.exceedance.compared;
        self.exceedance.cpus += other.exceedance.cpus;
        self.exceedance.memory += other.exceedance.memory;
        self.exceedance.unmatched += other.exceedance.unmatched;
        self.usage_records += other.usage_records;
        self.usage_sentinel_excluded += other.usage_sentinel_excluded;
        self.usage_spanning += other.usage_spanning;
    }

    pub fn usage_spanning(&self) -> u64 {
        self.usage_spanning
    }

    pub fn request_window_sums(&self) -> Vec<Resources> {
        self.requests.window_sums()
    }

    pub fn usage_window_sums(&self) -> Vec<Resources> {
        self.usage.iter().map(ResourceSum::value).collect()
    }

    pub fn finish(&self, grid: &WindowGrid, config: &AnalysisConfig) -> ResourcesSection {
        ResourcesSection {
            requested: DailyResourceSeries::from_window_sums(&self.request_window_sums(), grid),
            consumed: DailyResourceSeries::from_window_sums(&self.usage_window_sums(), grid),
            partial_last_day: grid.has_partial_last_day(),
            unlimited_tasks: self.unlimited_tasks,
            exceedance: self.exceedance,
            usage_records: self.usage_records,
            usage_sentinel_excluded: self.usage_sentinel_excluded,
            usage_spanning: self.usage_spanning,
            include_alloc_instances: config.include_alloc_instances,
        }
    }
}

/// Daily average of per-window request sums, with the unlimited-task count.
pub fn daily_average_requests(
    events: &[InstanceEvent],
    grid: &WindowGrid,
    include_alloc_instances: bool,
) -> (DailyResourceSeries, u64) {
    let mut deltas = WindowDeltas::new(grid.window_count);
    let mut unlimited = 0;
    for t in build_instance_timelines(events, grid).values() {
        if t.instance_type == InstanceType::AllocInstance && !include_alloc_instances {
            continue;
        }
        if add_instance_requests(t, grid, &mut deltas) {
            unlimited += 1;
        }
    }
    (
        DailyResourceSeries::from_window_sums(&deltas.window_sums(), grid),
        unlimited,
    )
}

/// Daily average of per-window usage sums; records starting at a sentinel
/// are left out and counted.
pub fn daily_average_usage(records: &[UsageRecord], grid: &WindowGrid) -> (DailyResourceSeries, u64) {
    let mut sums = vec![ResourceSum::default(); grid.window_count as usize];
    let mut excluded = 0;
    for r in records {
        match grid.window_index(r.start_time) {
            Ok(w) => sums[w as usize].add(r.average_usage),
            Err(_) => excluded += 1,
        }
    }
    let values: Vec<Resources> = sums.iter().map(ResourceSum::value).collect();
    (DailyResourceSeries::from_window_sums(&values, grid), excluded)
}

/// Sum of a day's window values divided by its window count.
pub fn day_average(values: &[f64]) -> f64 {
    values.iter().copied().collect::<ExactSum>().value() / values.len() as f64
}
