use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tracegrind::report::OUTPUT_FILES;

const GOLDEN_REPORT_DIGEST: &str = "9d8a84837e94cb8fca5e5a4a05a5fe0024fe97ffcb768a50581b8b32ac9e39da";

fn tracegrind(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tracegrind"))
        .args(args)
        .env_remove("TRACEGRIND_CONFIG")
        .output()
        .expect("binary runs")
}

fn golden_fixture(dir: &Path) {
    let spec = dir.join("spec.json");
    fs::write(&spec, r#"{"seed": 7, "job_count": 1000, "day_count": 3, "machine_count": 50}"#).unwrap();
    let fixture = dir.join("fixture");
    let out = tracegrind(&["generate", spec.to_str().unwrap(), fixture.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn analyze_golden_fixture() {
    let tmp = tempfile::tempdir().unwrap();
    golden_fixture(tmp.path());
    let fixture = tmp.path().join("fixture");
    assert_eq!(fs::read_dir(&fixture).unwrap().count(), 10);

    let one = tmp.path().join("one");
    let eight = tmp.path().join("eight");
    let out = tracegrind(&["analyze", s(&fixture), s(&one), "--workers", "1"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), GOLDEN_REPORT_DIGEST);
    let out = tracegrind(&["analyze", s(&fixture), s(&eight), "--workers", "8"]);
    assert_eq!(out.status.code(), Some(0));

    let mut written: Vec<String> = fs::read_dir(&one)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    written.sort();
    let mut expected: Vec<String> = OUTPUT_FILES.iter().map(|f| f.to_string()).collect();
    expected.sort();
    assert_eq!(written, expected);
    for f in OUTPUT_FILES {
        assert_eq!(fs::read(one.join(f)).unwrap(), fs::read(eight.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn ndjson_input_gives_the_same_report() {
    let tmp = tempfile::tempdir().unwrap();
    golden_fixture(tmp.path());
    let fixture = tmp.path().join("fixture");
    let out = tracegrind(&["analyze", s(&fixture), s(&tmp.path().join("r")), "--format", "ndjson"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), GOLDEN_REPORT_DIGEST);
}

#[test]
fn missing_table_names_the_file() {
    let tmp = tempfile::tempdir().unwrap();
    golden_fixture(tmp.path());
    let fixture = tmp.path().join("fixture");
    fs::remove_file(fixture.join("machine_events.csv")).unwrap();
    let out = tracegrind(&["analyze", s(&fixture), s(&tmp.path().join("r"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("machine_events.csv"));
}

#[test]
fn strict_mode_rejects_a_bad_line() {
    let tmp = tempfile::tempdir().unwrap();
    golden_fixture(tmp.path());
    let fixture = tmp.path().join("fixture");
    let path = fixture.join("collection_events.csv");
    let mut text = fs::read_to_string(&path).unwrap();
    text.push_str("not,a,valid,row\n");
    fs::write(&path, text).unwrap();

    let out = tracegrind(&["analyze", s(&fixture), s(&tmp.path().join("lax"))]);
    assert_eq!(out.status.code(), Some(0));
    let out = tracegrind(&["analyze", s(&fixture), s(&tmp.path().join("strict")), "--strict"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    golden_fixture(tmp.path());
    let fixture = tmp.path().join("fixture");
    let config = tmp.path().join("submit.toml");
    fs::write(&config, "duration_mode = \"submit\"\n").unwrap();
    let out_dir = tmp.path().join("r");
    let out = Command::new(env!("CARGO_BIN_EXE_tracegrind"))
        .args(["analyze", s(&fixture), s(&out_dir)])
        .env("TRACEGRIND_CONFIG", &config)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let report = fs::read_to_string(out_dir.join("report.json")).unwrap();
    assert!(report.contains("\"duration_mode\": \"submit\""));

    fs::write(&config, "window_seconds = 7\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_tracegrind"))
        .args(["analyze", s(&fixture), s(&out_dir)])
        .env("TRACEGRIND_CONFIG", &config)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn generate_rejects_negative_weight() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = tmp.path().join("bad.json");
    fs::write(&spec, r#"{"tier_mix": [0.5, -0.1, 0.1, 0.5, 0.0]}"#).unwrap();
    let out = tracegrind(&["generate", s(&spec), s(&tmp.path().join("f"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("tier_mix"));
}

#[test]
fn generate_twice_is_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = tmp.path().join("spec.toml");
    fs::write(&spec, "seed = 11\njob_count = 50\nday_count = 2\n").unwrap();
    let a = tracegrind(&["generate", s(&spec), s(&tmp.path().join("a"))]);
    let b = tracegrind(&["generate", s(&spec), s(&tmp.path().join("b"))]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(
        fs::read(tmp.path().join("a/manifest.json")).unwrap(),
        fs::read(tmp.path().join("b/manifest.json")).unwrap()
    );
}

#[test]
fn bench_writes_one_row_per_worker_count() {
    let tmp = tempfile::tempdir().unwrap();
    golden_fixture(tmp.path());
    let fixture = tmp.path().join("fixture");
    let out = tracegrind(&[
        "bench",
        s(&fixture),
        "--workers",
        "1,2,4",
        "--reps",
        "3",
        "--output",
        s(tmp.path()),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(tmp.path().join("fig9_scaling.csv")).unwrap();
    let rows: Vec<Vec<&str>> = csv.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r[2] == GOLDEN_REPORT_DIGEST));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(tracegrind(&[]).status.code(), Some(1));
    assert_eq!(tracegrind(&["analyze", "only-one-arg"]).status.code(), Some(1));
    assert_eq!(tracegrind(&["bench", "x", "--workers", "4,2"]).status.code(), Some(1));
    assert_eq!(tracegrind(&["--version"]).status.code(), Some(0));
}
