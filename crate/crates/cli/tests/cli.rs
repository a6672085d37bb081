use std::path::Path;
use std::process::{Command, Output};
use std::time::Instant;

use serde_json::Value;

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_freefield"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("FREEFIELD_OUT")
        .output()
        .expect("binary runs")
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn strip_wall_time(mut v: Value) -> Value {
    v["wall_time_s"] = Value::Null;
    v
}

#[test]
fn propagators_suite_passes_quickly() {
    let dir = tempfile::tempdir().unwrap();
    let t = Instant::now();
    let o = run(&["verify", "--suite", "propagators"], dir.path());
    let elapsed = t.elapsed().as_secs_f64();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    assert!(elapsed < 5.0, "took {elapsed}s");
    let rep = read_json(&dir.path().join("propagators.json"));
    assert_eq!(rep["schema"], 1);
    assert!(rep["records"].as_array().unwrap().iter().all(|r| r["status"] == "pass"));
    let summary = read_json(&dir.path().join("summary.json"));
    assert_eq!(summary["passed"], true);
}

#[test]
fn reports_are_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        assert!(run(&["verify", "--suite", "algebra", "--seed", "4"], d.path()).status.success());
    }
    let ra = strip_wall_time(read_json(&a.path().join("algebra.json")));
    let rb = strip_wall_time(read_json(&b.path().join("algebra.json")));
    assert_eq!(serde_json::to_string(&ra).unwrap(), serde_json::to_string(&rb).unwrap());
}

#[test]
fn all_suites_on_mink2d_run_thirteen_criteria() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["verify", "--suite", "all", "--lattice", "mink2d"], dir.path());
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(o.status.success(), "{stdout}");
    let summary = read_json(&dir.path().join("summary.json"));
    assert_eq!(summary["suites"][0]["criteria"].as_array().unwrap().len(), 13);
    assert_eq!(stdout.lines().filter(|l| l.starts_with("PASS")).count(), 13);
}

#[test]
fn corrupted_kernel_fails() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["verify", "--suite", "propagators", "--corrupt-kernel"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("FAIL"), "{stdout}");
    assert_eq!(read_json(&dir.path().join("summary.json"))["passed"], false);
}

#[test]
fn config_file_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "time1d_dt = -0.05\n").unwrap();
    let o = run(&["verify", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("time1d_dt"));

    std::fs::write(&cfg, "suites = [\"cohomology\"]\ntime1d_dt = -0.05\n").unwrap();
    let o = run(
        &["verify", "--config", cfg.to_str().unwrap(), "--set", "time1d_dt=0.05"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("cohomology.json").exists());
}

#[test]
fn kernel_dump_rows() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["dump", "--what", "kernel:retarded", "--set", "time1d_n_time=30"], dir.path());
    assert!(o.status.success());
    let csv = std::fs::read_to_string(dir.path().join("kernel_retarded.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 30 * 30);
}

#[test]
fn cohomology_dump_prints_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["dump", "--what", "cohomology:full", "--set", "time1d_n_time=12"], dir.path());
    assert!(o.status.success());
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.starts_with("degree"), "{stdout}");
    let v = read_json(&dir.path().join("cohomology_full.json"));
    assert_eq!(v["h0_dims"], serde_json::json!([1, 2, 3]));
}

#[test]
fn bad_dump_reference() {
    let dir = tempfile::tempdir().unwrap();
    for what in ["kernel:bogus", "observable:phi:999", "cohomology:everywhere"] {
        let o = run(&["dump", "--what", what], dir.path());
        assert_eq!(o.status.code(), Some(2), "{what}");
    }
    let o = run(&["dump", "--what", "kernel:bogus"], dir.path());
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown reference"));
}
