use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_reuse-pricing"));
    cmd.env("RUST_LOG", "warn");
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn config(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name).display().to_string()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn certify_c19() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = run(&["certify", "--C", "19", "--grid", "500", "--out", out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let cert = read_json(&dir.path().join("certificate_C19.json"));
    let bound = cert["lower_bound"].as_f64().unwrap();
    assert!((bound - 0.9041).abs() <= 1e-3, "{bound}");
    assert_eq!(cert["method"], "box_bruteforce");
    assert_eq!(cert["grid_n"], 500);
    for key in ["C", "argmin_box", "boxes_evaluated", "cases", "runtime_s"] {
        assert!(cert.get(key).is_some(), "missing {key}");
    }
}

#[test]
fn repro_example1_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["repro-example1", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rep = read_json(&dir.path().join("example1.json"));
    let revenue = rep["report"]["revenue"].as_f64().unwrap();
    let ratio = rep["report"]["ratio_constructed"].as_f64().unwrap();
    assert!((revenue - 0.96436).abs() <= 1e-3);
    assert!((ratio - 0.7899).abs() <= 1e-3);
}

#[test]
fn table_guarantees_csv() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["table-guarantees", "--Cmax", "20", "--grid", "0", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("guarantees.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "C,G,case1,case2,box,mhr");
    let rows: Vec<Vec<String>> = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    assert_eq!(rows.len(), 20);
    let c15 = &rows[14];
    assert_eq!(c15[0], "15");
    let case1: f64 = c15[2].parse().unwrap();
    assert_eq!((case1 * 1e4).floor() / 1e4, 0.9054);
    assert!(c15[4].is_empty());
}

#[test]
fn table_fluid_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = run(&["table-fluid", "--M", "2", "--C", "3", "--instances", "4", "--seed", "3", "--out", d.path().to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let x = std::fs::read(a.path().join("table_fluid.csv")).unwrap();
    let y = std::fs::read(b.path().join("table_fluid.csv")).unwrap();
    assert_eq!(x, y);
    let summary = read_json(&a.path().join("table_fluid_summary.json"));
    assert_eq!(summary["seed"], 3);
}

#[test]
fn solvers_and_ratio_from_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let cfg = config("example1.json");
    for sub in ["solve-dynamic", "solve-static", "ratio"] {
        let o = run(&[sub, "--config", &cfg, "--out", out]);
        assert!(o.status.success(), "{sub}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let rep = read_json(&dir.path().join("ratio.json"));
    let r = &rep["report"];
    let tilde = r["constructed_revenue"].as_f64().unwrap();
    let sta = r["optimal_static"]["revenue"].as_f64().unwrap();
    let star = r["dynamic"]["revenue"].as_f64().unwrap();
    assert!(tilde <= sta && sta <= star + 1e-8);
    assert!(dir.path().join("solve_dynamic.json").exists());
    assert!(dir.path().join("solve_static.json").exists());
}

#[test]
fn simulate_small_run() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "simulate", "--config", &config("example1.json"), "--policy", "constructed", "--service", "lognormal",
        "--horizon", "1000", "--reps", "3", "--seed", "4", "--out", dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = read_json(&dir.path().join("simulate.json"));
    assert_eq!(s["seed"], 4);
    assert_eq!(s["estimate"]["reps"], 3);
}

#[test]
fn usage_errors_exit_2() {
    let o = run(&["certify", "--C", "19", "--bogus"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!o.stderr.is_empty());
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["certify"]).status.code(), Some(2));
}

#[test]
fn computation_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"C": 2, "classes": [{"demand": {"kind": "linear", "a": 1, "b": 1}}]}"#).unwrap();
    let o = run(&["solve-dynamic", "--config", bad.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("classes[0].mu"));
    let o = run(&["certify", "--C", "0", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}
