// Run every analysis, write the output files and check against the ground truth.

use tracegrind::config::AnalysisConfig;
use tracegrind::engine::{run, AnalysisJob};
use tracegrind::report::AnalysisReport;
use tracegrind::synth::{generate, golden_spec};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let trace = generate(&golden_spec())?;
    let job = AnalysisJob::new(&trace.bundle, AnalysisConfig::default()).workers(4);
    let report = run(&job)?;
    println!("report digest {}", report.digest);

    let diffs = trace.truth.compare_to_report(&report);
    assert!(diffs.is_empty(), "{diffs:?}");

    let dir = std::env::temp_dir().join(format!("tracegrind-report-{}", std::process::id()));
    for path in report.write_outputs(&dir)? {
        println!("  {}", path.file_name().unwrap().to_string_lossy());
    }
    let text = std::fs::read_to_string(dir.join("report.json"))?;
    let parsed = AnalysisReport::from_json(&text)?;
    assert!(parsed.verify_digest());
    assert_eq!(parsed.to_json(), text);

    std::fs::remove_dir_all(&dir)?;
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
