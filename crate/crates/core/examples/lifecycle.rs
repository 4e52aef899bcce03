// Job lifecycles: durations, final states per tier, time spent per state.

use tracegrind::analysis::lifecycle::{
    build_lifecycles, duration_histogram, final_state_rates_by_tier, state_durations,
};
use tracegrind::config::{AnalysisConfig, DurationMode};
use tracegrind::model::EventType;
use tracegrind::synth::{generate_bundle, GeneratorSpec};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let spec = GeneratorSpec { job_count: 2000, sparse_instances: true, ..GeneratorSpec::default() };
    let bundle = generate_bundle(&spec)?;
    let config = AnalysisConfig::default();

    let jobs = build_lifecycles(&bundle.collection_events, &config.tier_boundaries, DurationMode::Running);
    let hist = duration_histogram(&jobs, &config.duration_band_edges);
    for b in &hist.bands.buckets {
        println!("{:<12} {:>5} {:.3}", b.label, b.count, b.fraction);
    }
    println!("censored {} without start {}", hist.censored, hist.without_start);

    for tier in final_state_rates_by_tier(&jobs) {
        let rates: Vec<String> = tier
            .final_states
            .buckets
            .iter()
            .map(|b| format!("{} {:.3}", b.label, b.fraction))
            .collect();
        println!("{:<18} {}", tier.tier, rates.join(", "));
    }

    let states = state_durations(&jobs);
    if let Some(s) = states.get(EventType::Schedule) {
        println!("mean time scheduled {:?} s over {} samples", s.mean_seconds, s.count);
    }

    // Time between SUBMIT and the terminal event is fully attributed.
    for job in jobs.iter().filter(|j| !j.censored) {
        let submit = job.events[0].0;
        let end = job.events.iter().find(|(_, e)| e.is_terminal()).map(|(t, _)| *t).unwrap();
        let attributed: u64 = job.state_attributions().map(|(_, d)| d).sum();
        assert_eq!(attributed, end - submit);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
