// Time the full analysis at several worker counts.

use tracegrind::config::AnalysisConfig;
use tracegrind::engine::{scaling_benchmark, AnalysisJob};
use tracegrind::synth::{generate_bundle, GeneratorSpec};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let spec = GeneratorSpec { job_count: 1000, ..GeneratorSpec::default() };
    let bundle = generate_bundle(&spec)?;
    let job = AnalysisJob::new(&bundle, AnalysisConfig::default());

    let result = scaling_benchmark(&job, &[1, 2, 4], 3)?;
    for row in &result.rows {
        println!("{} workers: {:.4} s median ({} merges)", row.worker_count, row.median_seconds, row.partial_merges);
    }
    assert!(result.digests_agree());
    println!("available cores: {}", std::thread::available_parallelism().map_or(1, |n| n.get()));
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
