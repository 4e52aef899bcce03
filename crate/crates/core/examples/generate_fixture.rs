// Generate the golden mini-trace and write it as a fixture directory.

use tracegrind::synth::{generate, golden_spec, write_fixture};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join(format!("tracegrind-fixture-{}", std::process::id()));
    let trace = generate(&golden_spec())?;
    let manifest = write_fixture(&trace, &dir)?;

    println!("bundle {}", manifest.bundle_digest);
    println!("{:?}", manifest.record_counts);
    for (name, sha) in &manifest.files {
        println!("  {name:<24} {}", &sha[..12]);
    }
    assert_eq!(manifest.files.len() + 1, 10);

    // Same seed, same bytes.
    let again = generate(&golden_spec())?;
    assert_eq!(again.bundle.digest(), trace.bundle.digest());

    std::fs::remove_dir_all(&dir)?;
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
