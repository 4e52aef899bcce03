// Machine counts, capacity and the window-level utilization CDF.

use tracegrind::analysis::cluster::{
    capacity_per_day, capacity_window_sums, machines_per_day, utilization_cdf, UtilizationSeries,
};
use tracegrind::analysis::resources::ResourcesPartial;
use tracegrind::config::AnalysisConfig;
use tracegrind::grid::WindowGrid;
use tracegrind::synth::{generate_bundle, GeneratorSpec};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let spec = GeneratorSpec {
        job_count: 800,
        day_count: 2,
        machine_count: 20,
        machine_churn_fraction: 0.2,
        ..GeneratorSpec::default()
    };
    let bundle = generate_bundle(&spec)?;
    let grid = WindowGrid::five_minute(bundle.trace_start, bundle.trace_end);

    println!("machines per day {:?}", machines_per_day(&bundle.machine_events, &grid));
    for d in capacity_per_day(&bundle.machine_events, &grid).days {
        println!("day {} capacity {:.3} cpu / {:.3} mem", d.day, d.cpus, d.memory);
    }

    let instances: Vec<_> = bundle.instance_events.iter().collect();
    let usage: Vec<_> = bundle.usage.iter().collect();
    let used = ResourcesPartial::fold(&instances, &usage, &grid, &AnalysisConfig::default())
        .usage_window_sums();
    let capacity = capacity_window_sums(&bundle.machine_events, &grid);

    for series in UtilizationSeries::ALL {
        let cdf = utilization_cdf(&used, &capacity, series)?;
        let median = cdf.points.iter().find(|p| p.p >= 0.5).map_or(0.0, |p| p.x);
        println!("{:<9} median {:.4} over {} windows", series.name(), median, cdf.included);
        assert_eq!(cdf.points.last().map(|p| p.p), Some(1.0));
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
