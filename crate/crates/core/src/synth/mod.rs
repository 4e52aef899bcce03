//! Seeded synthetic traces with a brute-force ground truth.
//!
//! Every resource value is a multiple of 2^-16, so plain floating point
//! sums over the generated records are exact and the ground truth can be
//! compared against the pipeline bit for bit.

mod truth;

pub use truth::{json_diff, GroundTruth};

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::AnalysisConfig;
use crate::digest::sha256_hex;
use crate::error::GeneratorError;
use crate::io::{assemble_bundle, Format, Provenance, TableCounts, TraceBundle};
use crate::model::{
    CollectionEvent, CollectionType, EventType, InstanceEvent, InstanceType, MachineEvent,
    MachineEventType, Micros, PriorityTier, Resources, TierBoundaries, UsageRecord,
    VerticalScaling, BEFORE_TRACE, MICROS_PER_DAY, MICROS_PER_SECOND, SECONDS_PER_DAY,
};

const S: Micros = MICROS_PER_SECOND;
/// Start of every generated trace.
pub const TRACE_ORIGIN: Micros = 600 * S;
/// Window length the usage records are tiled on.
pub const USAGE_WINDOW: Micros = 300 * S;

/// Step every generated resource value is rounded to.
pub const QUANTUM: f64 = 1.0 / 65536.0;

pub fn quantize(x: f64) -> f64 {
    (x / QUANTUM).round() * QUANTUM
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    /// Category counts follow the mix as closely as integer counts allow,
    /// assigned in shuffled order.
    #[default]
    Quota,
    /// Independent draws per record.
    Random,
}

/// Final states drawn per tier, in this order. The last one leaves the job
/// running at the end of the trace.
pub const FINAL_STATES: [EventType; 4] = [
    EventType::Finish,
    EventType::Kill,
    EventType::Fail,
    EventType::Schedule,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorSpec {
    pub seed: u64,
    pub day_count: u64,
    pub job_count: u64,
    pub alloc_set_count: u64,
    pub machine_count: u64,
    pub sampling: Sampling,
    pub tier_boundaries: TierBoundaries,
    /// FREE, BEST_EFFORT_BATCH, MID, PRODUCTION, MONITORING.
    pub tier_mix: [f64; 5],
    /// Task-count bins `1`, `2-10`, `11-100`, `101-1000`, `1001-2000`, `>2000`.
    pub size_mix: [f64; 6],
    /// Upper end of the `>2000` bin.
    pub max_job_size: u32,
    /// Only the first and last task of a job get records.
    pub sparse_instances: bool,
    /// Run-time bands `<100s`, `100-1000s`, `1000s-1d`, `>=1d`.
    pub duration_mix: [f64; 4],
    /// Per tier: FINISH, KILL, FAIL, still running.
    pub final_state_mix: [[f64; 4]; 5],
    /// Share of killed jobs that never get scheduled.
    pub pre_schedule_kill_fraction: f64,
    pub queue_fraction: f64,
    pub update_fraction: f64,
    pub unscheduled_instance_fraction: f64,
    pub alloc_hosted_fraction: f64,
    pub parent_fraction: f64,
    pub max_per_machine_fraction: f64,
    pub max_per_machine_values: Vec<(u32, f64)>,
    pub max_per_switch_fraction: f64,
    pub max_per_switch_values: Vec<(u32, f64)>,
    /// SETTING_UNKNOWN, OFF, USER_CONSTRAINED, FULLY_AUTOMATED.
    pub vertical_scaling_mix: [f64; 4],
    pub request_cpus: [f64; 2],
    pub request_memory: [f64; 2],
    pub zero_request_probability: f64,
    /// Usage as a multiple of the request in force.
    pub usage_ratio: [f64; 2],
    pub machine_cpus: [f64; 2],
    pub machine_memory: [f64; 2],
    pub machine_churn_fraction: f64,
    pub capacity_update_fraction: f64,
    /// Share of jobs and machines whose first event predates the trace.
    pub sentinel_fraction: f64,
    /// Share of submissions moved off the last two days of every fortnight.
    pub biweekly_dip: f64,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        let mut switch_values = vec![(1, 0.99)];
        switch_values.extend((0..20).map(|i| (2 + i * 5, 0.0005)));
        GeneratorSpec {
            seed: 7,
            day_count: 3,
            job_count: 1000,
            alloc_set_count: 5,
            machine_count: 50,
            sampling: Sampling::Quota,
            tier_boundaries: TierBoundaries::default(),
            tier_mix: [0.016, 0.091, 0.038, 0.852, 0.003],
            size_mix: normalize([
                4_067_109.0,
                906_736.0,
                149_516.0,
                72_984.0,
                7_715.0,
                9_606.0,
            ]),
            max_job_size: 2500,
            sparse_instances: false,
            duration_mix: [0.512, 0.341, 0.143, 0.004],
            final_state_mix: [
                [0.474, 0.492, 0.034, 0.0],
                [0.369, 0.589, 0.042, 0.0],
                [0.489, 0.495, 0.016, 0.0],
                [0.231, 0.765, 0.004, 0.0],
                [0.044, 0.092, 0.813, 0.051],
            ],
            pre_schedule_kill_fraction: 0.05,
            queue_fraction: 0.2,
            update_fraction: 0.01,
            unscheduled_instance_fraction: 0.48,
            alloc_hosted_fraction: 0.007,
            parent_fraction: 0.64,
            max_per_machine_fraction: 0.01,
            max_per_machine_values: {
                let w = normalize([35_150.0, 289.0, 2.0, 36.0]);
                vec![(1, w[0]), (2, w[1]), (10, w[2]), (25, w[3])]
            },
            max_per_switch_fraction: 0.01,
            max_per_switch_values: switch_values,
            vertical_scaling_mix: [0.0, 0.068, 0.666, 0.266],
            request_cpus: [0.002, 0.08],
            request_memory: [0.002, 0.06],
            zero_request_probability: 0.02,
            usage_ratio: [0.1, 1.2],
            machine_cpus: [0.25, 1.0],
            machine_memory: [0.25, 1.0],
            machine_churn_fraction: 0.02,
            capacity_update_fraction: 0.02,
            sentinel_fraction: 0.0,
            biweekly_dip: 0.0,
        }
    }
}

fn check_mix(name: &str, w: &[f64]) -> Result<(), GeneratorError> {
    if let Some(x) = w.iter().find(|x| !x.is_finite() || **x < 0.0) {
        return Err(GeneratorError::Invalid(format!(
            "{name} has a negative or non-finite weight {x}"
        )));
    }
    let total: f64 = w.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(GeneratorError::Invalid(format!("{name} sums to {total}, not 1")));
    }
    Ok(())
}

/// Scales non-negative weights to sum to one.
pub fn normalize<const N: usize>(w: [f64; N]) -> [f64; N] {
    let total: f64 = w.iter().sum();
    w.map(|x| x / total)
}

fn check_fraction(name: &str, p: f64) -> Result<(), GeneratorError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(GeneratorError::Invalid(format!("{name} must lie in [0, 1], got {p}")))
    }
}

fn check_range(name: &str, r: [f64; 2]) -> Result<(), GeneratorError> {
    if r[0].is_finite() && r[1].is_finite() && 0.0 <= r[0] && r[0] <= r[1] {
        Ok(())
    } else {
        Err(GeneratorError::Invalid(format!("{name} must be an ascending non-negative range")))
    }
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<(), GeneratorError> {
        if self.day_count == 0 {
            return Err(GeneratorError::Invalid("day_count must be at least 1".into()));
        }
        if self.machine_count == 0 {
            return Err(GeneratorError::Invalid("machine_count must be at least 1".into()));
        }
        check_mix("tier_mix", &self.tier_mix)?;
        check_mix("size_mix", &self.size_mix)?;
        check_mix("duration_mix", &self.duration_mix)?;
        check_mix("vertical_scaling_mix", &self.vertical_scaling_mix)?;
        for (i, m) in self.final_state_mix.iter().enumerate() {
            check_mix(&format!("final_state_mix[{i}]"), m)?;
        }
        let mpm: Vec<f64> = self.max_per_machine_values.iter().map(|v| v.1).collect();
        let mps: Vec<f64> = self.max_per_switch_values.iter().map(|v| v.1).collect();
        if self.max_per_machine_fraction > 0.0 {
            check_mix("max_per_machine_values", &mpm)?;
        }
        if self.max_per_switch_fraction > 0.0 {
            check_mix("max_per_switch_values", &mps)?;
        }
        for (name, p) in [
            ("pre_schedule_kill_fraction", self.pre_schedule_kill_fraction),
            ("queue_fraction", self.queue_fraction),
            ("update_fraction", self.update_fraction),
            ("unscheduled_instance_fraction", self.unscheduled_instance_fraction),
            ("alloc_hosted_fraction", self.alloc_hosted_fraction),
            ("parent_fraction", self.parent_fraction),
            ("max_per_machine_fraction", self.max_per_machine_fraction),
            ("max_per_switch_fraction", self.max_per_switch_fraction),
            ("zero_request_probability", self.zero_request_probability),
            ("machine_churn_fraction", self.machine_churn_fraction),
            ("capacity_update_fraction", self.capacity_update_fraction),
            ("sentinel_fraction", self.sentinel_fraction),
            ("biweekly_dip", self.biweekly_dip),
        ] {
            check_fraction(name, p)?;
        }
        for (name, r) in [
            ("request_cpus", self.request_cpus),
            ("request_memory", self.request_memory),
            ("usage_ratio", self.usage_ratio),
            ("machine_cpus", self.machine_cpus),
            ("machine_memory", self.machine_memory),
        ] {
            check_range(name, r)?;
        }
        if self.duration_mix[3] > 0.0 && self.day_count < 2 {
            return Err(GeneratorError::Infeasible(
                "jobs longer than a day need at least two days".into(),
            ));
        }
        if self.size_mix[5] > 0.0 && self.max_job_size <= 2000 {
            return Err(GeneratorError::Infeasible(
                "the >2000 size bin needs max_job_size above 2000".into(),
            ));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, GeneratorError> {
        serde_json::from_str(text).map_err(|e| GeneratorError::Invalid(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self, GeneratorError> {
        toml::from_str(text).map_err(|e| GeneratorError::Invalid(e.to_string()))
    }

    /// Reads a TOML file (`.toml`) or JSON otherwise.
    pub fn load(path: &Path) -> Result<Self, GeneratorError> {
        let text = fs::read_to_string(path)?;
        if path.extension().is_some_and(|e| e == "toml") {
            Self::from_toml(&text)
        } else {
            Self::from_json(&text)
        }
    }

    pub fn horizon_end(&self) -> Micros {
        TRACE_ORIGIN + self.day_count * MICROS_PER_DAY - 1
    }
}

/// A generated bundle with its ground truth.
#[derive(Debug, Clone)]
pub struct GeneratedTrace {
    pub spec: GeneratorSpec,
    pub bundle: TraceBundle,
    pub truth: GroundTruth,
}

/// Category per item: exact quotas or independent draws.
fn categories(rng: &mut ChaCha8Rng, weights: &[f64], n: usize, sampling: Sampling) -> Vec<usize> {
    match sampling {
        Sampling::Random => {
            let dist = WeightedIndex::new(weights).expect("validated weights");
            (0..n).map(|_| dist.sample(rng)).collect()
        }
        Sampling::Quota => {
            let total: f64 = weights.iter().sum();
            let exact: Vec<f64> = weights.iter().map(|w| w / total * n as f64).collect();
            let mut counts: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
            let mut order: Vec<usize> = (0..weights.len()).collect();
            // Largest remainder first; ties go to the lower index.
            order.sort_by(|&a, &b| {
                let ra = exact[a] - exact[a].floor();
                let rb = exact[b] - exact[b].floor();
                rb.total_cmp(&ra).then(a.cmp(&b))
            });
            let short = n - counts.iter().sum::<usize>();
            for &i in order.iter().take(short) {
                counts[i] += 1;
            }
            let mut out: Vec<usize> = counts
                .iter()
                .enumerate()
                .flat_map(|(i, &c)| std::iter::repeat(i).take(c))
                .collect();
            out.shuffle(rng);
            out
        }
    }
}

fn tier_priority(rng: &mut ChaCha8Rng, bounds: &TierBoundaries, tier: usize) -> i32 {
    let (lo, hi) = bounds.interval(PriorityTier::ALL[tier]);
    let lo = lo.unwrap_or(0);
    let hi = hi.unwrap_or(lo + 100);
    rng.gen_range(lo..hi)
}

struct Builder<'a> {
    spec: &'a GeneratorSpec,
    rng: ChaCha8Rng,
    end: Micros,
    collections: Vec<CollectionEvent>,
    instances: Vec<InstanceEvent>,
    usage: Vec<UsageRecord>,
    machines: Vec<MachineEvent>,
}

/// Collection-level fields shared by all of a collection's events.
#[derive(Clone, Copy)]
struct Fields {
    alloc: Option<u64>,
    parent: Option<u64>,
    max_per_machine: Option<u32>,
    max_per_switch: Option<u32>,
    vertical_scaling: VerticalScaling,
}

/// Timeline of one job.
struct JobPlan {
    id: u64,
    priority: i32,
    fields: Fields,
    submit_sentinel: bool,
    submit: Micros,
    queue: Option<Micros>,
    enable: Micros,
    /// `None` when killed before scheduling.
    schedule: Option<Micros>,
    update: Option<(Micros, Micros)>,
    terminal: Option<(Micros, EventType)>,
    size: u32,
}

impl<'a> Builder<'a> {
    fn delay(&mut self, lo_s: u64, hi_s: u64) -> Micros {
        self.rng.gen_range(lo_s * S..hi_s * S)
    }

    fn request(&mut self) -> Resources {
        let [cl, ch] = self.spec.request_cpus;
        let [ml, mh] = self.spec.request_memory;
        let p0 = self.spec.zero_request_probability;
        let cpus = if self.rng.gen_bool(p0) { 0.0 } else { quantize(self.rng.gen_range(cl..=ch)) };
        let memory = if self.rng.gen_bool(p0) { 0.0 } else { quantize(self.rng.gen_range(ml..=mh)) };
        Resources::new(cpus, memory)
    }

    fn capacity(&mut self) -> Resources {
        let [cl, ch] = self.spec.machine_cpus;
        let [ml, mh] = self.spec.machine_memory;
        Resources::new(
            quantize(self.rng.gen_range(cl..=ch)),
            quantize(self.rng.gen_range(ml..=mh)),
        )
    }

    fn usage_of(&mut self, request: Resources) -> Resources {
        let [lo, hi] = self.spec.usage_ratio;
        let mut component = |r: f64| {
            let base = if r > 0.0 { r } else { 0.01 };
            quantize(base * self.rng.gen_range(lo..=hi))
        };
        Resources::new(component(request.cpus), component(request.memory))
    }

    /// Submission time for a job needing `span` before the horizon end.
    fn submit_time(&mut self, span: Micros) -> Micros {
        let hi = self.end - span;
        let mut t = self.rng.gen_range(TRACE_ORIGIN..=hi);
        for _ in 0..20 {
            let day = (t - TRACE_ORIGIN) / MICROS_PER_DAY;
            if day % 14 < 12 || !self.rng.gen_bool(self.spec.biweekly_dip) {
                break;
            }
            t = self.rng.gen_range(TRACE_ORIGIN..=hi);
        }
        t
    }

    fn run_duration(&mut self, band: usize, pre: Micros) -> Micros {
        let cap = self.spec.day_count * MICROS_PER_DAY - pre - 20 * S;
        let d = match band {
            0 => self.rng.gen_range(2 * S..100 * S),
            1 => self.rng.gen_range(100 * S..1000 * S),
            2 => {
                let (lo, hi) = ((1000.0f64).ln(), (SECONDS_PER_DAY as f64).ln());
                let secs = self.rng.gen_range(lo..hi).exp();
                ((secs * S as f64) as Micros).clamp(1000 * S, MICROS_PER_DAY - 1)
            }
            _ => self.rng.gen_range(MICROS_PER_DAY..cap.max(MICROS_PER_DAY + 1)),
        };
        d.min(cap)
    }

    fn draw_fields(&mut self, n: usize, job_count: u64) -> Vec<Fields> {
        let spec = self.spec;
        let vs = categories(&mut self.rng, &spec.vertical_scaling_mix, n, spec.sampling);
        let mpm_weights: Vec<f64> = std::iter::once(1.0 - spec.max_per_machine_fraction)
            .chain(normalized(&spec.max_per_machine_values, spec.max_per_machine_fraction))
            .collect();
        let mps_weights: Vec<f64> = std::iter::once(1.0 - spec.max_per_switch_fraction)
            .chain(normalized(&spec.max_per_switch_values, spec.max_per_switch_fraction))
            .collect();
        let mpm = categories(&mut self.rng, &mpm_weights, n, spec.sampling);
        let mps = categories(&mut self.rng, &mps_weights, n, spec.sampling);
        (0..n)
            .map(|k| {
                let id = k as u64 + 1;
                let hosted = spec.alloc_set_count > 0
                    && id <= job_count
                    && self.rng.gen_bool(spec.alloc_hosted_fraction);
                let parent = job_count > 1 && self.rng.gen_bool(spec.parent_fraction);
                Fields {
                    alloc: hosted
                        .then(|| job_count + 1 + self.rng.gen_range(0..spec.alloc_set_count)),
                    parent: parent.then(|| {
                        let p = self.rng.gen_range(1..job_count);
                        if p >= id { p + 1 } else { p }
                    }),
                    max_per_machine: (mpm[k] > 0).then(|| spec.max_per_machine_values[mpm[k] - 1].0),
                    max_per_switch: (mps[k] > 0).then(|| spec.max_per_switch_values[mps[k] - 1].0),
                    vertical_scaling: VerticalScaling::ALL[vs[k]],
                }
            })
            .collect()
    }

    fn plan_jobs(&mut self, fields: &[Fields]) -> Vec<JobPlan> {
        let spec = self.spec;
        let n = spec.job_count as usize;
        let tiers = categories(&mut self.rng, &spec.tier_mix, n, spec.sampling);
        let mut finals = vec![0usize; n];
        for tier in 0..5 {
            let members: Vec<usize> = (0..n).filter(|&j| tiers[j] == tier).collect();
            let drawn = categories(&mut self.rng, &spec.final_state_mix[tier], members.len(), spec.sampling);
            for (j, f) in members.into_iter().zip(drawn) {
                finals[j] = f;
            }
        }
        let pre_kill: Vec<bool> = (0..n)
            .map(|j| FINAL_STATES[finals[j]] == EventType::Kill && self.rng.gen_bool(spec.pre_schedule_kill_fraction))
            .collect();
        let runs: Vec<usize> = (0..n)
            .filter(|&j| !pre_kill[j] && FINAL_STATES[finals[j]] != EventType::Schedule)
            .collect();
        let run_bands = categories(&mut self.rng, &spec.duration_mix, runs.len(), spec.sampling);
        let mut bands = vec![None; n];
        for (j, b) in runs.into_iter().zip(run_bands) {
            bands[j] = Some(b);
        }
        let sizes = categories(&mut self.rng, &spec.size_mix, n, spec.sampling);

        (0..n)
            .map(|j| {
                let id = j as u64 + 1;
                let submit_sentinel = self.rng.gen_bool(spec.sentinel_fraction);
                let queue_delay = self.rng.gen_bool(spec.queue_fraction).then(|| self.delay(1, 600));
                let to_next = self.delay(1, 30);
                let to_schedule = self.delay(1, 30);
                let pre = to_next + queue_delay.unwrap_or(0) + to_schedule;
                let final_state = FINAL_STATES[finals[j]];
                let run = bands[j].map(|b| self.run_duration(b, pre));
                let span = pre + run.unwrap_or(0) + 10 * S;
                let submit = self.submit_time(span);
                let queue = queue_delay.map(|_| submit + to_next);
                let enable = submit + to_next + queue_delay.unwrap_or(0);
                let (schedule, update, terminal) = if pre_kill[j] {
                    (None, None, Some((submit + pre, EventType::Kill)))
                } else {
                    let s = submit + pre;
                    match run {
                        Some(d) => {
                            let update = (d >= 10 * S && self.rng.gen_bool(spec.update_fraction))
                                .then(|| (s + d / 3, s + d / 2));
                            (Some(s), update, Some((s + d, final_state)))
                        }
                        None => (Some(s), None, None),
                    }
                };
                let (lo, hi) = JOB_SIZE_RANGES[sizes[j]];
                let hi = if sizes[j] == 5 { spec.max_job_size } else { hi };
                JobPlan {
                    id,
                    priority: tier_priority(&mut self.rng, &spec.tier_boundaries, tiers[j]),
                    fields: fields[j],
                    submit_sentinel,
                    submit,
                    queue,
                    enable,
                    schedule,
                    update,
                    terminal,
                    size: self.rng.gen_range(lo..=hi),
                }
            })
            .collect()
    }

    fn collection_event(&mut self, plan: &JobPlan, time: Micros, et: EventType, ct: CollectionType) {
        self.collections.push(CollectionEvent {
            time,
            collection_id: plan.id,
            event_type: et,
            collection_type: ct,
            priority: plan.priority,
            alloc_collection_id: plan.fields.alloc,
            parent_collection_id: plan.fields.parent,
            max_per_machine: plan.fields.max_per_machine,
            max_per_switch: plan.fields.max_per_switch,
            vertical_scaling: plan.fields.vertical_scaling,
        });
    }

    fn emit_job(&mut self, plan: &JobPlan) {
        let ct = CollectionType::Job;
        let submit = if plan.submit_sentinel { BEFORE_TRACE } else { plan.submit };
        self.collection_event(plan, submit, EventType::Submit, ct);
        if let Some(q) = plan.queue {
            self.collection_event(plan, q, EventType::Queue, ct);
        }
        if let Some(s) = plan.schedule {
            self.collection_event(plan, plan.enable, EventType::Enable, ct);
            self.collection_event(plan, s, EventType::Schedule, ct);
        }
        if let Some((up, ur)) = plan.update {
            self.collection_event(plan, up, EventType::UpdatePending, ct);
            self.collection_event(plan, ur, EventType::UpdateRunning, ct);
        }
        if let Some((t, et)) = plan.terminal {
            self.collection_event(plan, t, et, ct);
        }

        let indices: Vec<u32> = if self.spec.sparse_instances && plan.size > 1 {
            vec![0, plan.size - 1]
        } else {
            (0..plan.size).collect()
        };
        for index in indices {
            self.emit_task(plan, index, submit);
        }
    }

    fn instance_event(
        &mut self,
        plan: &JobPlan,
        index: u32,
        time: Micros,
        et: EventType,
        machine: Option<u64>,
        request: Resources,
    ) {
        self.instances.push(InstanceEvent {
            time,
            collection_id: plan.id,
            instance_index: index,
            event_type: et,
            instance_type: InstanceType::Task,
            machine_id: machine,
            priority: plan.priority,
            alloc_collection_id: plan.fields.alloc,
            resource_request: request,
        });
    }

    fn emit_task(&mut self, plan: &JobPlan, index: u32, submit: Micros) {
        let r0 = self.request();
        self.instance_event(plan, index, submit, EventType::Submit, None, r0);
        let Some(s) = plan.schedule else {
            let (t, et) = plan.terminal.expect("unscheduled jobs are killed");
            self.instance_event(plan, index, t, et, None, r0);
            return;
        };
        if self.rng.gen_bool(self.spec.unscheduled_instance_fraction) {
            self.instance_event(plan, index, s, EventType::Kill, None, r0);
            return;
        }
        let machine = self.rng.gen_range(1..=self.spec.machine_count);
        let stop = plan.terminal.map_or(self.end + 1, |(t, _)| t);
        let offset = self.rng.gen_range(0..=(5 * S).min((stop - s) / 4));
        let start = s + offset;
        self.instance_event(plan, index, start, EventType::Schedule, Some(machine), r0);
        let mut changes = vec![(start, r0)];
        if let Some((_, ur)) = plan.update {
            if ur > start {
                let r1 = self.request();
                self.instance_event(plan, index, ur, EventType::UpdateRunning, Some(machine), r1);
                changes.push((ur, r1));
            }
        }
        if let Some((t, et)) = plan.terminal {
            let last = changes.last().expect("non-empty").1;
            self.instance_event(plan, index, t, et, Some(machine), last);
        }
        self.emit_usage(plan.id, index, machine, start, stop, &changes);
    }

    /// One record per usage window the run overlaps, clipped to the run and
    /// the horizon.
    fn emit_usage(
        &mut self,
        collection_id: u64,
        index: u32,
        machine: u64,
        start: Micros,
        stop: Micros,
        changes: &[(Micros, Resources)],
    ) {
        let stop = stop.min(self.end);
        let mut w = (start - TRACE_ORIGIN) / USAGE_WINDOW;
        loop {
            let ws = TRACE_ORIGIN + w * USAGE_WINDOW;
            if ws >= stop {
                break;
            }
            let a = ws.max(start);
            let b = (ws + USAGE_WINDOW).min(stop);
            if a < b {
                let request = changes
                    .iter()
                    .rev()
                    .find(|(t, _)| *t <= a)
                    .map_or(changes[0].1, |c| c.1);
                let average_usage = self.usage_of(request);
                self.usage.push(UsageRecord {
                    start_time: a,
                    end_time: b,
                    collection_id,
                    instance_index: index,
                    machine_id: machine,
                    average_usage,
                });
            }
            w += 1;
        }
    }

    fn emit_alloc_set(&mut self, id: u64, fields: Fields) {
        let spec = self.spec;
        let priority = tier_priority(&mut self.rng, &spec.tier_boundaries, 3);
        let quarter = (spec.day_count * MICROS_PER_DAY / 4).max(S);
        let t0 = TRACE_ORIGIN + self.rng.gen_range(0..quarter);
        let s = t0 + self.delay(1, 30);
        let plan = JobPlan {
            id,
            priority,
            fields,
            submit_sentinel: false,
            submit: t0,
            queue: None,
            enable: t0 + 1,
            schedule: Some(s),
            update: None,
            terminal: None,
            size: 0,
        };
        self.collection_event(&plan, t0, EventType::Submit, CollectionType::AllocSet);
        self.collection_event(&plan, plan.enable, EventType::Enable, CollectionType::AllocSet);
        self.collection_event(&plan, s, EventType::Schedule, CollectionType::AllocSet);
        for index in 0..self.rng.gen_range(1..=3u32) {
            let r = self.request();
            let machine = self.rng.gen_range(1..=spec.machine_count);
            for (t, et, m) in [(t0, EventType::Submit, None), (s + 1, EventType::Schedule, Some(machine))] {
                self.instances.push(InstanceEvent {
                    time: t,
                    collection_id: id,
                    instance_index: index,
                    event_type: et,
                    instance_type: InstanceType::AllocInstance,
                    machine_id: m,
                    priority,
                    alloc_collection_id: None,
                    resource_request: r,
                });
            }
        }
    }

    fn emit_machines(&mut self) {
        let spec = self.spec;
        let span = self.end - TRACE_ORIGIN;
        let mut marker_capacity = Resources::ZERO;
        for id in 1..=spec.machine_count {
            let mut capacity = self.capacity();
            let sentinel = id != 1 && self.rng.gen_bool(spec.sentinel_fraction);
            self.machines.push(MachineEvent {
                time: if sentinel { BEFORE_TRACE } else { TRACE_ORIGIN },
                machine_id: id,
                event_type: MachineEventType::Add,
                capacity,
            });
            if id == 1 {
                marker_capacity = capacity;
                continue;
            }
            if self.rng.gen_bool(spec.capacity_update_fraction) {
                capacity = self.capacity();
                let t = TRACE_ORIGIN + self.rng.gen_range(1..span);
                self.machines.push(MachineEvent {
                    time: t,
                    machine_id: id,
                    event_type: MachineEventType::Update,
                    capacity,
                });
            }
            if self.rng.gen_bool(spec.machine_churn_fraction) {
                let t = TRACE_ORIGIN + self.rng.gen_range(1..span);
                self.machines.push(MachineEvent {
                    time: t,
                    machine_id: id,
                    event_type: MachineEventType::Remove,
                    capacity,
                });
                let back = t + self.delay(60, 7200);
                if back < self.end && self.rng.gen_bool(0.5) {
                    self.machines.push(MachineEvent {
                        time: back,
                        machine_id: id,
                        event_type: MachineEventType::Add,
                        capacity,
                    });
                }
            }
        }
        // Pins the trace end to the last microsecond of the last day.
        self.machines.push(MachineEvent {
            time: self.end,
            machine_id: 1,
            event_type: MachineEventType::Update,
            capacity: marker_capacity,
        });
    }
}

const JOB_SIZE_RANGES: [(u32, u32); 6] = [
    (1, 1),
    (2, 10),
    (11, 100),
    (101, 1000),
    (1001, 2000),
    (2001, 2001),
];

fn normalized(values: &[(u32, f64)], mass: f64) -> Vec<f64> {
    let total: f64 = values.iter().map(|v| v.1).sum();
    values
        .iter()
        .map(|v| if total > 0.0 { v.1 / total * mass } else { 0.0 })
        .collect()
}

/// Builds a trace from `spec` and computes its ground truth under the
/// default analysis configuration.
pub fn generate(spec: &GeneratorSpec) -> Result<GeneratedTrace, GeneratorError> {
    generate_with(spec, &AnalysisConfig::default())
}

pub fn generate_with(
    spec: &GeneratorSpec,
    config: &AnalysisConfig,
) -> Result<GeneratedTrace, GeneratorError> {
    let bundle = generate_bundle(spec)?;
    let truth = GroundTruth::compute(&bundle, config);
    Ok(GeneratedTrace {
        spec: spec.clone(),
        bundle,
        truth,
    })
}

/// Builds the trace only.
pub fn generate_bundle(spec: &GeneratorSpec) -> Result<TraceBundle, GeneratorError> {
    spec.validate()?;
    let mut b = Builder {
        spec,
        rng: ChaCha8Rng::seed_from_u64(spec.seed),
        end: spec.horizon_end(),
        collections: Vec::new(),
        instances: Vec::new(),
        usage: Vec::new(),
        machines: Vec::new(),
    };
    b.emit_machines();
    let collections = (spec.job_count + spec.alloc_set_count) as usize;
    let fields = b.draw_fields(collections, spec.job_count);
    let plans = b.plan_jobs(&fields);
    for plan in &plans {
        b.emit_job(plan);
    }
    for k in 0..spec.alloc_set_count {
        let id = spec.job_count + 1 + k;
        b.emit_alloc_set(id, fields[id as usize - 1]);
    }
    let Builder {
        mut collections,
        mut instances,
        mut usage,
        mut machines,
        ..
    } = b;
    collections.sort_by_key(|e| (e.time, e.collection_id));
    instances.sort_by_key(|e| (e.time, e.collection_id, e.instance_index));
    usage.sort_by_key(|u| (u.start_time, u.collection_id, u.instance_index));
    machines.sort_by_key(|m| (m.time, m.machine_id));
    Ok(assemble_bundle(
        collections,
        instances,
        usage,
        machines,
        Provenance::default(),
    )?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureManifest {
    pub seed: u64,
    pub spec: GeneratorSpec,
    pub bundle_digest: String,
    pub trace_start: Micros,
    pub trace_end: Micros,
    pub record_counts: TableCounts,
    /// SHA-256 of every other file in the fixture.
    pub files: BTreeMap<String, String>,
}

pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Writes the four tables in both formats, the ground truth and a manifest.
pub fn write_fixture(trace: &GeneratedTrace, dir: &Path) -> Result<FixtureManifest, GeneratorError> {
    fs::create_dir_all(dir)?;
    let mut files = BTreeMap::new();
    for format in [Format::Csv, Format::Ndjson] {
        for path in trace.bundle.write_tables(dir, format)? {
            let name = path.file_name().expect("file").to_string_lossy().into_owned();
            files.insert(name, sha256_hex(&fs::read(&path)?));
        }
    }
    let truth = serde_json::to_string_pretty(&trace.truth).expect("truth serializes") + "\n";
    fs::write(dir.join(GROUND_TRUTH_FILE), &truth)?;
    files.insert(GROUND_TRUTH_FILE.to_string(), sha256_hex(truth.as_bytes()));
    let manifest = FixtureManifest {
        seed: trace.spec.seed,
        spec: trace.spec.clone(),
        bundle_digest: trace.bundle.digest().to_string(),
        trace_start: trace.bundle.trace_start,
        trace_end: trace.bundle.trace_end,
        record_counts: trace.bundle.provenance.record_counts.clone(),
        files,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    fs::write(dir.join(MANIFEST_FILE), text)?;
    Ok(manifest)
}

/// The reference fixture: three days, 1000 jobs, 50 machines.
pub fn golden_spec() -> GeneratorSpec {
    GeneratorSpec {
        seed: 7,
        day_count: 3,
        job_count: 1000,
        machine_count: 50,
        ..GeneratorSpec::default()
    }
}
