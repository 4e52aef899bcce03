// Requested against consumed resources, averaged per day over 5-minute windows.

use tracegrind::analysis::resources::{daily_average_requests, daily_average_usage};
use tracegrind::grid::WindowGrid;
use tracegrind::synth::{generate_bundle, GeneratorSpec};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let spec = GeneratorSpec { job_count: 800, day_count: 2, ..GeneratorSpec::default() };
    let bundle = generate_bundle(&spec)?;
    let grid = WindowGrid::five_minute(bundle.trace_start, bundle.trace_end);
    println!("{} days, {} windows", grid.day_count, grid.window_count);

    let (requested, unlimited) = daily_average_requests(&bundle.instance_events, &grid, false);
    let (consumed, excluded) = daily_average_usage(&bundle.usage, &grid);
    for (r, u) in requested.days.iter().zip(&consumed.days) {
        println!(
            "day {}: requested {:.4} cpu / {:.4} mem, used {:.4} cpu / {:.4} mem",
            r.day, r.cpus, r.memory, u.cpus, u.memory
        );
    }
    println!("tasks with an unset request component: {unlimited}");
    assert_eq!(excluded, 0);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
