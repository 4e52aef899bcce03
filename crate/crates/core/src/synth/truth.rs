//! Brute-force reference values for a bundle.
//!
//! Everything here is recomputed from the raw records with direct loops
//! over windows and jobs, sharing no code with the analysis modules. The
//! result has the same JSON shape as the report sections so the two can be
//! diffed field by field.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{AnalysisConfig, DurationMode};
use crate::io::TraceBundle;
use crate::model::{
    CollectionEvent, CollectionType, EventType, InstanceEvent, InstanceType, MachineEvent,
    MachineEventType, Micros, PriorityTier, Resources, VerticalScaling, AFTER_TRACE,
    BEFORE_TRACE,
};
use crate::report::AnalysisReport;

const DAY: u64 = 86_400_000_000;

fn sentinel(t: Micros) -> bool {
    t == BEFORE_TRACE || t == AFTER_TRACE
}

/// Horizon arithmetic, kept separate from the grid type on purpose.
#[derive(Debug, Clone, Copy)]
struct Horizon {
    start: Micros,
    end: Micros,
    window: Micros,
    per_day: u64,
    windows: u64,
    days: u64,
}

impl Horizon {
    fn new(start: Micros, end: Micros, window_seconds: u64) -> Self {
        let window = window_seconds * 1_000_000;
        Horizon {
            start,
            end,
            window,
            per_day: DAY / window,
            windows: (end - start) / window + 1,
            days: (end - start) / DAY + 1,
        }
    }

    fn day(&self, t: Micros) -> Option<u64> {
        (!sentinel(t) && t >= self.start && t <= self.end).then(|| (t - self.start) / DAY)
    }

    fn window_start(&self, w: u64) -> Micros {
        self.start + w * self.window
    }

    /// Whether window `w` intersects `[a, b)` clipped to the horizon.
    fn overlaps(&self, w: u64, a: Micros, b: Micros) -> bool {
        let a = a.max(self.start);
        let b = b.min(self.end + 1);
        let ws = self.window_start(w);
        a < b && a < ws + self.window && ws < b
    }

    fn day_windows(&self, d: u64) -> u64 {
        (self.windows - d * self.per_day).min(self.per_day)
    }

    fn daily(&self, sums: &[Resources]) -> Vec<Resources> {
        (0..self.days)
            .map(|d| {
                let n = self.day_windows(d);
                let first = (d * self.per_day) as usize;
                let mut total = Resources::ZERO;
                for r in &sums[first..first + n as usize] {
                    total.cpus += r.cpus;
                    total.memory += r.memory;
                }
                Resources::new(total.cpus / n as f64, total.memory / n as f64)
            })
            .collect()
    }

    fn series_json(&self, daily: &[Resources]) -> Value {
        json!({
            "days": daily.iter().enumerate().map(|(d, r)| json!({
                "day": d,
                "windows": self.day_windows(d as u64),
                "cpus": r.cpus,
                "memory": r.memory,
            })).collect::<Vec<_>>()
        })
    }
}

/// Reference values for every report section except the metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub trace_start: Micros,
    pub trace_end: Micros,
    pub day_count: u64,
    pub window_count: u64,
    pub heterogeneity: Value,
    pub lifecycle: Value,
    pub resources: Value,
    pub cluster: Value,
    pub data_quality: Value,
}

fn distribution(pairs: Vec<(String, u64)>) -> Value {
    let total: u64 = pairs.iter().map(|p| p.1).sum();
    json!({
        "buckets": pairs.iter().map(|(label, count)| json!({
            "label": label,
            "count": count,
            "fraction": if total == 0 { 0.0 } else { *count as f64 / total as f64 },
        })).collect::<Vec<_>>(),
        "total": total,
    })
}

fn present(pairs: Vec<(String, u64)>) -> Value {
    distribution(pairs.into_iter().filter(|p| p.1 > 0).collect())
}

fn tier_of(priority: i32, cuts: [i32; 4]) -> usize {
    let mut tier = 0;
    for c in cuts {
        if priority >= c {
            tier += 1;
        }
    }
    tier
}

fn event_counts<'a>(types: impl Iterator<Item = &'a EventType>) -> Value {
    let mut counts: BTreeMap<u8, u64> = BTreeMap::new();
    for t in types {
        *counts.entry(t.code()).or_default() += 1;
    }
    present(
        EventType::ALL
            .iter()
            .map(|e| (e.name().to_string(), counts.get(&e.code()).copied().unwrap_or(0)))
            .collect(),
    )
}

/// Earliest event per collection; ties keep the first in input order.
fn first_events(events: &[CollectionEvent]) -> BTreeMap<u64, &CollectionEvent> {
    let mut first: BTreeMap<u64, &CollectionEvent> = BTreeMap::new();
    for e in events {
        let replace = match first.get(&e.collection_id) {
            None => true,
            Some(cur) => e.time < cur.time || (e.time == cur.time && e.event_type.code() < cur.event_type.code()),
        };
        if replace {
            first.insert(e.collection_id, e);
        }
    }
    first
}

fn optional_field(values: impl Iterator<Item = Option<u32>>) -> Value {
    let mut unset = 0;
    let mut set: BTreeMap<u32, u64> = BTreeMap::new();
    for v in values {
        match v {
            None => unset += 1,
            Some(v) => *set.entry(v).or_default() += 1,
        }
    }
    let mut pairs = vec![("unset".to_string(), unset)];
    pairs.extend(set.into_iter().map(|(v, c)| (v.to_string(), c)));
    distribution(pairs)
}

fn size_label(tasks: u64) -> &'static str {
    if tasks == 1 {
        "1"
    } else if tasks <= 10 {
        "2-10"
    } else if tasks <= 100 {
        "11-100"
    } else if tasks <= 1000 {
        "101-1000"
    } else if tasks <= 2000 {
        "1001-2000"
    } else {
        ">2000"
    }
}

fn heterogeneity(b: &TraceBundle, h: &Horizon, config: &AnalysisConfig) -> (Value, u64) {
    let cuts = config.tier_boundaries.cuts();
    let labels = &config.daily_event_labels;
    let mut per_day = vec![vec![0u64; labels.len()]; h.days as usize];
    let mut day_excluded = 0;
    let mut tiers_day = vec![vec![0u64; 5]; h.days as usize];
    let mut tier_excluded = 0;
    for e in &b.collection_events {
        let day = h.day(e.time);
        if let Some(l) = labels.iter().position(|l| *l == e.event_type) {
            match day {
                Some(d) => per_day[d as usize][l] += 1,
                None => day_excluded += 1,
            }
        }
        match day {
            Some(d) => tiers_day[d as usize][tier_of(e.priority, cuts)] += 1,
            None => tier_excluded += 1,
        }
    }

    let firsts = first_events(&b.collection_events);
    let mut job_tiers = [0u64; 5];
    for e in firsts.values() {
        if e.collection_type == CollectionType::Job {
            job_tiers[tier_of(e.priority, cuts)] += 1;
        }
    }
    let hosted = firsts.values().filter(|e| e.alloc_collection_id.is_some()).count() as u64;
    let parented = firsts.values().filter(|e| e.parent_collection_id.is_some()).count() as u64;
    let n = firsts.len() as u64;
    let mut vs = [0u64; 4];
    for e in firsts.values() {
        vs[e.vertical_scaling.code() as usize] += 1;
    }

    let mut max_index: BTreeMap<u64, u32> = BTreeMap::new();
    let mut placed: BTreeMap<(u64, u32), bool> = BTreeMap::new();
    for e in &b.instance_events {
        if e.instance_type == InstanceType::Task {
            let m = max_index.entry(e.collection_id).or_insert(0);
            *m = (*m).max(e.instance_index);
        }
        let p = placed.entry((e.collection_id, e.instance_index)).or_insert(false);
        *p = *p || e.machine_id.is_some();
    }
    let mut sizes: BTreeMap<&str, u64> = BTreeMap::new();
    for m in max_index.values() {
        *sizes.entry(size_label(*m as u64 + 1)).or_default() += 1;
    }
    let instances = placed.len() as u64;
    let scheduled = placed.values().filter(|p| **p).count() as u64;

    let tier_names: Vec<String> = PriorityTier::ALL.iter().map(|t| t.name().to_string()).collect();
    let value = json!({
        "collection_event_types": event_counts(b.collection_events.iter().map(|e| &e.event_type)),
        "instance_event_types": event_counts(b.instance_events.iter().map(|e| &e.event_type)),
        "collection_events_per_day": {
            "labels": labels.iter().map(|l| l.name()).collect::<Vec<_>>(),
            "days": per_day,
            "exclusions": day_excluded,
        },
        "tiers_per_day": {
            "labels": tier_names,
            "days": tiers_day,
            "exclusions": tier_excluded,
        },
        "job_tiers": distribution(tier_names.iter().cloned().zip(job_tiers).collect()),
        "alloc_hosting": distribution(vec![("top_level".into(), n - hosted), ("hosted".into(), hosted)]),
        "parent_presence": distribution(vec![("no_parent".into(), n - parented), ("has_parent".into(), parented)]),
        "max_per_machine": optional_field(firsts.values().map(|e| e.max_per_machine)),
        "max_per_switch": optional_field(firsts.values().map(|e| e.max_per_switch)),
        "vertical_scaling": distribution(
            VerticalScaling::ALL.iter().map(|v| (v.name().to_string(), vs[v.code() as usize])).collect()
        ),
        "job_sizes": distribution(
            ["1", "2-10", "11-100", "101-1000", "1001-2000", ">2000"]
                .iter()
                .map(|l| (l.to_string(), sizes.get(l).copied().unwrap_or(0)))
                .collect()
        ),
        "scheduled_fraction": {
            "instances": instances,
            "scheduled": scheduled,
            "fraction": if instances == 0 { 0.0 } else { scheduled as f64 / instances as f64 },
            "empty": instances == 0,
        },
    });
    (value, day_excluded)
}

struct JobFacts {
    tier: usize,
    duration: Option<Micros>,
    malformed: bool,
    censored: bool,
    final_state: EventType,
    attributions: Vec<(EventType, Micros)>,
}

fn job_facts(events: &mut [&CollectionEvent], config: &AnalysisConfig) -> JobFacts {
    // Insertion sort keeps equal keys in input order.
    for i in 1..events.len() {
        let mut j = i;
        while j > 0
            && (events[j].time, events[j].event_type.code())
                < (events[j - 1].time, events[j - 1].event_type.code())
        {
            events.swap(j, j - 1);
            j -= 1;
        }
    }
    let start_type = match config.duration_mode {
        DurationMode::Running => EventType::Schedule,
        DurationMode::Submit => EventType::Submit,
    };
    let terminal = |e: EventType| {
        matches!(e, EventType::Evict | EventType::Fail | EventType::Finish | EventType::Kill)
    };
    let mut start = None;
    let mut end = None;
    for e in events.iter() {
        if sentinel(e.time) {
            continue;
        }
        if start.is_none() && e.event_type == start_type {
            start = Some(e.time);
        }
        if end.is_none() && terminal(e.event_type) {
            end = Some(e.time);
        }
    }
    let censored = events.iter().all(|e| !terminal(e.event_type));
    let (duration, malformed) = match (start, end) {
        (Some(s), Some(e)) => {
            if e >= s {
                (Some(e - s), false)
            } else {
                (None, true)
            }
        }
        _ => (None, false),
    };
    let bearing = [
        EventType::Submit,
        EventType::Queue,
        EventType::Enable,
        EventType::Schedule,
        EventType::UpdatePending,
        EventType::UpdateRunning,
    ];
    let mut attributions = Vec::new();
    for i in 0..events.len().saturating_sub(1) {
        let (a, b) = (events[i], events[i + 1]);
        if bearing.contains(&a.event_type) && !sentinel(a.time) && !sentinel(b.time) {
            attributions.push((a.event_type, b.time - a.time));
        }
    }
    JobFacts {
        tier: tier_of(events[0].priority, config.tier_boundaries.cuts()),
        duration,
        malformed,
        censored,
        final_state: events[events.len() - 1].event_type,
        attributions,
    }
}

fn lifecycle(b: &TraceBundle, config: &AnalysisConfig) -> Value {
    let mut by_job: BTreeMap<u64, Vec<&CollectionEvent>> = BTreeMap::new();
    for e in &b.collection_events {
        by_job.entry(e.collection_id).or_default().push(e);
    }
    let edges = &config.duration_band_edges;
    let mut bands = vec![0u64; edges.len()];
    let (mut censored, mut without_start, mut malformed) = (0u64, 0u64, 0u64);
    let mut tier_sums = [(0u64, 0.0f64); 5];
    let mut finals: [BTreeMap<u8, u64>; 5] = Default::default();
    let mut states: BTreeMap<u8, Vec<Micros>> = BTreeMap::new();
    let mut jobs = 0u64;
    for evs in by_job.values_mut() {
        if evs.iter().any(|e| e.collection_type != CollectionType::Job) {
            continue;
        }
        jobs += 1;
        let f = job_facts(evs, config);
        match f.duration {
            Some(d) => {
                let mut band = 0;
                for (i, e) in edges.iter().enumerate() {
                    if d >= e * 1_000_000 {
                        band = i;
                    }
                }
                bands[band] += 1;
                tier_sums[f.tier].0 += 1;
                tier_sums[f.tier].1 += d as f64 / 1e6;
            }
            None if f.malformed => malformed += 1,
            None if f.censored => censored += 1,
            None => without_start += 1,
        }
        *finals[f.tier].entry(f.final_state.code()).or_default() += 1;
        for (s, d) in f.attributions {
            states.entry(s.code()).or_default().push(d);
        }
    }
    let labels: Vec<String> = edges
        .iter()
        .enumerate()
        .map(|(i, lo)| match edges.get(i + 1) {
            Some(hi) => format!("{lo}-{hi}s"),
            None => format!(">={lo}s"),
        })
        .collect();
    let mode = match config.duration_mode {
        DurationMode::Running => "running",
        DurationMode::Submit => "submit",
    };
    let state_list = [
        EventType::Submit,
        EventType::Queue,
        EventType::Enable,
        EventType::Schedule,
        EventType::UpdatePending,
        EventType::UpdateRunning,
    ];
    json!({
        "duration_mode": mode,
        "jobs": jobs,
        "durations": {
            "bands": distribution(labels.into_iter().zip(bands).collect()),
            "censored": censored,
            "without_start": without_start,
            "malformed": malformed,
        },
        "tier_durations": PriorityTier::ALL.iter().enumerate().map(|(i, t)| json!({
            "tier": t.name(),
            "jobs_with_duration": tier_sums[i].0,
            "mean_seconds": (tier_sums[i].0 > 0).then(|| tier_sums[i].1 / tier_sums[i].0 as f64),
        })).collect::<Vec<_>>(),
        "final_states_by_tier": PriorityTier::ALL.iter().enumerate().map(|(i, t)| json!({
            "tier": t.name(),
            "final_states": present(
                EventType::ALL.iter().map(|e| (e.name().to_string(), finals[i].get(&e.code()).copied().unwrap_or(0))).collect()
            ),
        })).collect::<Vec<_>>(),
        "state_durations": {
            "states": state_list.iter().map(|s| {
                let v = states.get(&s.code()).cloned().unwrap_or_default();
                let total: u64 = v.iter().sum();
                json!({
                    "state": s.name(),
                    "count": v.len(),
                    "total_micros": total,
                    "mean_seconds": (!v.is_empty()).then(|| total as f64 / 1e6 / v.len() as f64),
                    "min_seconds": v.iter().min().map(|m| *m as f64 / 1e6),
                    "max_seconds": v.iter().max().map(|m| *m as f64 / 1e6),
                })
            }).collect::<Vec<_>>(),
        },
    })
}

struct Instance<'a> {
    kind: InstanceType,
    /// Non-sentinel events sorted by time and type code.
    events: Vec<&'a InstanceEvent>,
    running: Option<(Micros, Micros)>,
}

impl Instance<'_> {
    fn request_for(&self, w: u64, h: &Horizon) -> Option<Resources> {
        let (s, e) = self.running?;
        if !h.overlaps(w, s, e) {
            return None;
        }
        let at = h.window_start(w).max(s);
        self.events
            .iter()
            .rev()
            .find(|ev| ev.time <= at)
            .map(|ev| ev.resource_request)
    }
}

fn instances<'a>(b: &'a TraceBundle, h: &Horizon) -> BTreeMap<(u64, u32), Instance<'a>> {
    let mut all: BTreeMap<(u64, u32), Vec<&InstanceEvent>> = BTreeMap::new();
    for e in &b.instance_events {
        all.entry((e.collection_id, e.instance_index)).or_default().push(e);
    }
    all.into_iter()
        .map(|(k, mut evs)| {
            let kind = evs[0].instance_type;
            evs.retain(|e| !sentinel(e.time));
            evs.sort_by_key(|e| (e.time, e.event_type.code()));
            let start = evs
                .iter()
                .find(|e| e.event_type == EventType::Schedule)
                .map(|e| e.time);
            let running = start.map(|s| {
                let end = evs
                    .iter()
                    .find(|e| e.event_type.is_terminal() && e.time >= s)
                    .map_or(h.end + 1, |e| e.time);
                (s, end)
            });
            (k, Instance { kind, events: evs, running })
        })
        .collect()
}

fn resources(b: &TraceBundle, h: &Horizon, config: &AnalysisConfig) -> (Value, Vec<Resources>) {
    let all = instances(b, h);
    let mut requested = vec![Resources::ZERO; h.windows as usize];
    let mut unlimited = 0u64;
    for inst in all.values() {
        if inst.kind == InstanceType::AllocInstance && !config.include_alloc_instances {
            continue;
        }
        let Some((s, e)) = inst.running else { continue };
        let stop = e.min(h.end + 1);
        let mut any_zero = false;
        let mut w = (s.max(h.start) - h.start) / h.window;
        for w in std::iter::from_fn(|| {
            let this = w;
            w += 1;
            (h.window_start(this) < stop).then_some(this)
        }) {
            if let Some(r) = inst.request_for(w, h) {
                requested[w as usize] += r;
                any_zero |= r.cpus == 0.0 || r.memory == 0.0;
            }
        }
        if any_zero {
            unlimited += 1;
        }
    }

    let mut used = vec![Resources::ZERO; h.windows as usize];
    let (mut compared, mut over_cpu, mut over_mem, mut unmatched) = (0u64, 0u64, 0u64, 0u64);
    let (mut excluded, mut spanning) = (0u64, 0u64);
    for u in &b.usage {
        if sentinel(u.start_time) || u.start_time < h.start || u.start_time > h.end {
            excluded += 1;
            continue;
        }
        let w = (u.start_time - h.start) / h.window;
        if !sentinel(u.end_time) && u.end_time > u.start_time {
            let last = (u.end_time - 1 - h.start) / h.window;
            if last != w {
                spanning += 1;
            }
        }
        used[w as usize] += u.average_usage;
        match all
            .get(&(u.collection_id, u.instance_index))
            .and_then(|i| i.request_for(w, h))
        {
            Some(r) => {
                compared += 1;
                if r.cpus > 0.0 && u.average_usage.cpus > r.cpus {
                    over_cpu += 1;
                }
                if r.memory > 0.0 && u.average_usage.memory > r.memory {
                    over_mem += 1;
                }
            }
            None => unmatched += 1,
        }
    }
    let value = json!({
        "requested": h.series_json(&h.daily(&requested)),
        "consumed": h.series_json(&h.daily(&used)),
        "partial_last_day": h.day_windows(h.days - 1) < h.per_day,
        "unlimited_tasks": unlimited,
        "exceedance": {
            "compared": compared,
            "cpus": over_cpu,
            "memory": over_mem,
            "unmatched": unmatched,
        },
        "usage_records": b.usage.len(),
        "usage_sentinel_excluded": excluded,
        "usage_spanning": spanning,
        "include_alloc_instances": config.include_alloc_instances,
    });
    (value, used)
}

struct Machine {
    presence: Vec<(Micros, Micros)>,
    capacity: Vec<(Micros, Resources)>,
    remove_without_add: u64,
}

fn replay_machine(events: &mut [&MachineEvent], h: &Horizon) -> Machine {
    let beyond = h.end + 1;
    let clamp = |t: Micros| if t == AFTER_TRACE { beyond } else { t.max(h.start).min(beyond) };
    events.sort_by_key(|e| (clamp(e.time), e.event_type.code()));
    let mut m = Machine {
        presence: Vec::new(),
        capacity: Vec::new(),
        remove_without_add: 0,
    };
    let mut open = None;
    for (i, e) in events.iter().enumerate() {
        let t = clamp(e.time);
        match e.event_type {
            MachineEventType::Add => {
                open = open.or(Some(t));
                m.capacity.push((t, e.capacity));
            }
            MachineEventType::Remove => {
                if let Some(from) = open {
                    m.presence.push((from, t));
                    open = None;
                } else {
                    m.remove_without_add += 1;
                    if i == 0 {
                        m.presence.push((h.start, t));
                    }
                }
            }
            MachineEventType::Update if i == 0 => {
                open = Some(h.start);
                m.capacity.push((h.start, e.capacity));
            }
            MachineEventType::Update => m.capacity.push((t, e.capacity)),
        }
    }
    if let Some(from) = open {
        m.presence.push((from, beyond));
    }
    m.presence.retain(|(a, b)| a < b);
    m
}

fn cluster(b: &TraceBundle, h: &Horizon, used: &[Resources]) -> Value {
    let mut by_machine: BTreeMap<u64, Vec<&MachineEvent>> = BTreeMap::new();
    for e in &b.machine_events {
        by_machine.entry(e.machine_id).or_default().push(e);
    }
    let mut per_day = vec![0u64; h.days as usize];
    let mut capacity = vec![Resources::ZERO; h.windows as usize];
    let mut remove_without_add = 0;
    for evs in by_machine.values_mut() {
        let m = replay_machine(evs, h);
        remove_without_add += m.remove_without_add;
        for d in 0..h.days {
            let (ds, de) = (h.start + d * DAY, h.start + (d + 1) * DAY);
            if m.presence.iter().any(|&(a, b)| a.max(ds) < b.min(de).min(h.end + 1)) {
                per_day[d as usize] += 1;
            }
        }
        for w in 0..h.windows {
            let Some(&(a, _)) = m.presence.iter().find(|&&(a, b)| h.overlaps(w, a, b)) else {
                continue;
            };
            let at = h.window_start(w).max(a);
            if let Some((_, c)) = m.capacity.iter().rev().find(|(t, _)| *t <= at) {
                capacity[w as usize] += *c;
            }
        }
    }
    let cap_daily = h.daily(&capacity);
    let use_daily = h.daily(used);
    let ratio = |u: f64, c: f64| (c != 0.0).then(|| u / c);

    let cdf = |pick: &dyn Fn(Resources, Resources) -> Option<f64>| {
        let mut xs: Vec<f64> = used
            .iter()
            .zip(&capacity)
            .filter_map(|(u, c)| pick(*u, *c))
            .collect();
        let included = xs.len();
        xs.sort_by(|a, b| a.partial_cmp(b).expect("finite ratios"));
        let mut points = Vec::new();
        let mut i = 0;
        while i < xs.len() {
            let x = xs[i];
            let below = xs.iter().filter(|v| **v <= x).count();
            points.push(json!({"x": x, "p": below as f64 / included as f64}));
            i = below;
        }
        (points, included, used.len() - included)
    };
    let cpu = |u: Resources, c: Resources| ratio(u.cpus, c.cpus);
    let mem = |u: Resources, c: Resources| ratio(u.memory, c.memory);
    let both = |u: Resources, c: Resources| Some(cpu(u, c)?.max(mem(u, c)?));
    let series: [(&str, &dyn Fn(Resources, Resources) -> Option<f64>); 3] =
        [("cpus", &cpu), ("memory", &mem), ("combined", &both)];

    json!({
        "machines": by_machine.len(),
        "machines_per_day": per_day,
        "capacity": h.series_json(&cap_daily),
        "utilization_per_day": (0..h.days as usize).map(|d| json!({
            "day": d,
            "cpus": ratio(use_daily[d].cpus, cap_daily[d].cpus),
            "memory": ratio(use_daily[d].memory, cap_daily[d].memory),
        })).collect::<Vec<_>>(),
        "cdf": series.iter().map(|(name, pick)| {
            let (points, included, excluded) = cdf(*pick);
            json!({"series": name, "points": points, "included": included, "excluded": excluded})
        }).collect::<Vec<_>>(),
        "remove_without_add": remove_without_add,
        "zero_capacity_windows": capacity.iter().filter(|c| c.cpus == 0.0 || c.memory == 0.0).count(),
        "overcommitted_windows": used.iter().zip(&capacity).filter(|(u, c)| u.cpus > c.cpus || u.memory > c.memory).count(),
    })
}

impl GroundTruth {
    pub fn compute(bundle: &TraceBundle, config: &AnalysisConfig) -> Self {
        let h = Horizon::new(bundle.trace_start, bundle.trace_end, config.window_seconds);
        let (heterogeneity, day_exclusions) = heterogeneity(bundle, &h, config);
        let lifecycle = lifecycle(bundle, config);
        let (resources, used) = resources(bundle, &h, config);
        let cluster = cluster(bundle, &h, &used);
        let durations = &lifecycle["durations"];
        let data_quality = json!({
            "rejected_lines": bundle.provenance.rejected_lines,
            "day_exclusions": day_exclusions,
            "censored_jobs": durations["censored"],
            "malformed_jobs": durations["malformed"],
            "jobs_without_start": durations["without_start"],
            "usage_sentinel_excluded": resources["usage_sentinel_excluded"],
            "usage_spanning": resources["usage_spanning"],
            "zero_capacity_windows": cluster["zero_capacity_windows"],
            "overcommitted_windows": cluster["overcommitted_windows"],
            "remove_without_add": cluster["remove_without_add"],
            "partial_last_day": resources["partial_last_day"],
        });
        GroundTruth {
            trace_start: h.start,
            trace_end: h.end,
            day_count: h.days,
            window_count: h.windows,
            heterogeneity,
            lifecycle,
            resources,
            cluster,
            data_quality,
        }
    }

    /// Field-level differences against a full report; empty when they
    /// agree. Integers must match exactly, floats to `1e-9` relative.
    pub fn compare_to_report(&self, report: &AnalysisReport) -> Vec<String> {
        let mut diffs = Vec::new();
        let meta = &report.metadata;
        for (name, want, got) in [
            ("trace_start", self.trace_start, meta.trace_start),
            ("trace_end", self.trace_end, meta.trace_end),
            ("day_count", self.day_count, meta.day_count),
            ("window_count", self.window_count, meta.window_count),
        ] {
            if want != got {
                diffs.push(format!("metadata.{name}: expected {want}, got {got}"));
            }
        }
        let sections = [
            ("heterogeneity", &self.heterogeneity, report.heterogeneity.as_ref().map(to_value)),
            ("lifecycle", &self.lifecycle, report.lifecycle.as_ref().map(to_value)),
            ("resources", &self.resources, report.resources.as_ref().map(to_value)),
            ("cluster", &self.cluster, report.cluster.as_ref().map(to_value)),
            ("data_quality", &self.data_quality, Some(to_value(&report.data_quality))),
        ];
        for (name, want, got) in sections {
            match got {
                Some(got) => json_diff(want, &got, name, &mut diffs),
                None => diffs.push(format!("{name}: missing from report")),
            }
        }
        diffs
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report section serializes")
}

/// Whether two floats agree to `1e-9` relative.
pub fn close(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= 1e-9 * a.abs().max(b.abs())
}

/// Appends every difference between `want` and `got` under `path`.
pub fn json_diff(want: &Value, got: &Value, path: &str, out: &mut Vec<String>) {
    match (want, got) {
        (Value::Object(a), Value::Object(b)) => {
            for (k, v) in a {
                match b.get(k) {
                    Some(w) => json_diff(v, w, &format!("{path}.{k}"), out),
                    None => out.push(format!("{path}.{k}: missing")),
                }
            }
            for k in b.keys().filter(|k| !a.contains_key(*k)) {
                out.push(format!("{path}.{k}: unexpected"));
            }
        }
        (Value::Array(a), Value::Array(b)) => {
            if a.len() != b.len() {
                out.push(format!("{path}: expected {} items, got {}", a.len(), b.len()));
            }
            for (i, (x, y)) in a.iter().zip(b).enumerate() {
                json_diff(x, y, &format!("{path}[{i}]"), out);
            }
        }
        (Value::Number(a), Value::Number(b)) => {
            let same = match (a.as_u64(), b.as_u64(), a.as_i64(), b.as_i64()) {
                (Some(x), Some(y), _, _) => x == y,
                (_, _, Some(x), Some(y)) => x == y,
                _ => match (a.as_f64(), b.as_f64()) {
                    (Some(x), Some(y)) => close(x, y),
                    _ => false,
                },
            };
            if !same {
                out.push(format!("{path}: expected {a}, got {b}"));
            }
        }
        _ if want == got => {}
        _ => out.push(format!("{path}: expected {want}, got {got}")),
    }
}
