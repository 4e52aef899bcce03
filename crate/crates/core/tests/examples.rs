mod generate_fixture_example {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/generate_fixture.rs"));
}

#[test]
fn generate_fixture_example_runs() {
    generate_fixture_example::run_example().expect("generate_fixture example should run");
}

mod ingest_and_partition_example {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/ingest_and_partition.rs"));
}

#[test]
fn ingest_and_partition_example_runs() {
    ingest_and_partition_example::run_example().expect("ingest_and_partition example should run");
}

mod heterogeneity_example {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/heterogeneity.rs"));
}

#[test]
fn heterogeneity_example_runs() {
    heterogeneity_example::run_example().expect("heterogeneity example should run");
}

mod lifecycle_example {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/lifecycle.rs"));
}

#[test]
fn lifecycle_example_runs() {
    lifecycle_example::run_example().expect("lifecycle example should run");
}

mod resources_example {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/resources.rs"));
}

#[test]
fn resources_example_runs() {
    resources_example::run_example().expect("resources example should run");
}

mod cluster_utilization_example {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/cluster_utilization.rs"));
}

#[test]
fn cluster_utilization_example_runs() {
    cluster_utilization_example::run_example().expect("cluster_utilization example should run");
}

mod scaling_example {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/scaling.rs"));
}

#[test]
fn scaling_example_runs() {
    scaling_example::run_example().expect("scaling example should run");
}

mod exact_sum_example {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/exact_sum.rs"));
}

#[test]
fn exact_sum_example_runs() {
    exact_sum_example::run_example().expect("exact_sum example should run");
}

mod full_report_example {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/full_report.rs"));
}

#[test]
fn full_report_example_runs() {
    full_report_example::run_example().expect("full_report example should run");
}
