// Event-type mix, priority tiers, constraint fields and job sizes.

use tracegrind::analysis::heterogeneity::{
    count_event_types, field_distribution, job_size_distribution, job_tier_distribution,
    scheduled_fraction, CollectionField,
};
use tracegrind::model::TierBoundaries;
use tracegrind::synth::{generate_bundle, GeneratorSpec};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let spec = GeneratorSpec { job_count: 2000, sparse_instances: true, ..GeneratorSpec::default() };
    let bundle = generate_bundle(&spec)?;
    let jobs = &bundle.collection_events;

    let types = count_event_types(jobs);
    for b in &types.buckets {
        println!("{:<16} {:>6} {:.3}", b.label, b.count, b.fraction);
    }

    let tiers = job_tier_distribution(jobs, &TierBoundaries::default());
    println!("production share {:.3}", tiers.fraction("PRODUCTION"));

    let vs = field_distribution(jobs, CollectionField::VerticalScaling);
    println!("user constrained {:.3}", vs.fraction("USER_CONSTRAINED"));
    let mpm = field_distribution(jobs, CollectionField::MaxPerMachine);
    println!("max_per_machine unset {:.3}", mpm.fraction("unset"));

    let sizes = job_size_distribution(&bundle.instance_events);
    println!("single-task jobs {}", sizes.count("1"));
    let placed = scheduled_fraction(&bundle.instance_events);
    println!("scheduled instances {}/{}", placed.scheduled, placed.instances);
    assert_eq!(tiers.total, spec.job_count);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
