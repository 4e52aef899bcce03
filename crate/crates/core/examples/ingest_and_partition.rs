// Write a bundle in both formats, read it back, and split it by key.

use tracegrind::io::{load_bundle, partition_by_key, Format, IngestOptions, PartitionKey, Strictness};
use tracegrind::synth::{generate_bundle, GeneratorSpec};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let spec = GeneratorSpec { job_count: 300, day_count: 2, ..GeneratorSpec::default() };
    let bundle = generate_bundle(&spec)?;
    let dir = std::env::temp_dir().join(format!("tracegrind-ingest-{}", std::process::id()));

    for format in [Format::Csv, Format::Ndjson] {
        bundle.write_tables(&dir, format)?;
        let (loaded, log) = load_bundle(&dir, &IngestOptions::new(format, Strictness::Strict))?;
        assert_eq!(log.total(), 0);
        assert_eq!(loaded.digest(), bundle.digest());
        println!("{:?}: {} records, digest {}", format, loaded.event_count(), &loaded.digest()[..16]);
    }

    let parts = partition_by_key(&bundle.instance_events, PartitionKey::Collection, 4);
    let sizes: Vec<usize> = parts.iter().map(Vec::len).collect();
    println!("instance events per partition: {sizes:?}");
    assert_eq!(sizes.iter().sum::<usize>(), bundle.instance_events.len());

    let machines = partition_by_key(&bundle.machine_events, PartitionKey::Machine, 3);
    println!("machine events per partition: {:?}", machines.iter().map(Vec::len).collect::<Vec<_>>());

    std::fs::remove_dir_all(&dir)?;
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
