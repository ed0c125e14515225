use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn varcause(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_varcause"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn json(o: &Output) -> Value {
    assert_eq!(code(o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).expect("JSON report")
}

const OMEGA: &str = r#"{
  "names": ["y1", "y2", "y3", "y4", "y5", "y6"],
  "omega": [
    [0.3333333333333333, 0.6666666666666666, 0, 0, 0, 0],
    [0.6666666666666666, 0.3333333333333333, 0, 0, 0, 0],
    [0, 0, 0.25, 0.75, 0, 0],
    [0, 0, 0.2, 0.8, 0, 0],
    [0.25, 0, 0.25, 0, 0.25, 0.25],
    [0, 0.16666666666666666, 0.16666666666666666, 0.3333333333333333, 0.16666666666666666, 0.16666666666666666]
  ]
}"#;

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn generated(dir: &Path, template: &str, seed: &str) -> PathBuf {
    let p = dir.join(format!("{template}-{seed}.csv"));
    let o = varcause(&["generate", "--template", template, "--T", "100", "--seed", seed, "-o", p.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    p
}

#[test]
fn zero_horizon_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let input = generated(dir.path(), "periodic", "1");
    let o = varcause(&["decompose", "--lags", "1,2", "--horizon", "0", input.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
}

#[test]
fn zero_datasets_is_a_usage_error() {
    assert_eq!(code(&varcause(&["simulate", "--template", "periodic", "--datasets", "0"])), 1);
}

#[test]
fn unknown_flag_and_conflicting_sources() {
    assert_eq!(code(&varcause(&["decompose", "--lagz", "1"])), 1);
    assert_eq!(code(&varcause(&["decompose", "--omega", "a.json", "in.csv"])), 1);
    assert_eq!(code(&varcause(&["--help"])), 0);
}

#[test]
fn missing_input_file_is_a_data_error() {
    assert_eq!(code(&varcause(&["decompose", "--lags", "1", "/nonexistent/in.csv"])), 2);
}

#[test]
fn decompose_rows_sum_to_one() {
    let dir = tempfile::tempdir().unwrap();
    let input = generated(dir.path(), "classification", "3");
    for horizon in ["limit", "120"] {
        let r = json(&varcause(&["decompose", "--lags", "1,2", "--horizon", horizon, input.to_str().unwrap()]));
        assert_eq!(r["schema_version"], 1);
        assert_eq!(r["command"], "decompose");
        let omega = r["result"]["omega"].as_array().unwrap();
        assert_eq!(omega.len(), 9);
        for row in omega {
            let s: f64 = row.as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).sum();
            assert!((s - 1.0).abs() < 1e-10);
        }
        assert!(r["result"]["max_row_error"].as_f64().unwrap() < 1e-10);
    }
}

#[test]
fn decompose_csv_feeds_pi() {
    let dir = tempfile::tempdir().unwrap();
    let input = generated(dir.path(), "circular", "5");
    let omega = dir.path().join("omega.csv");
    let o = varcause(&[
        "decompose", "--lags", "1,2", "--format", "csv", "-o", omega.to_str().unwrap(), input.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let r = json(&varcause(&["pi", "--omega", omega.to_str().unwrap()]));
    let pi = r["result"]["distribution"]["pi"].as_object().unwrap();
    let s: f64 = pi.values().map(|v| v.as_f64().unwrap()).sum();
    assert!((s - 1.0).abs() < 1e-9);
}

#[test]
fn quota_and_local_on_a_given_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let omega = write(dir.path(), "omega.json", OMEGA);
    let r = json(&varcause(&["pi", "--omega", omega.to_str().unwrap(), "--quota", "0.4,0.6"]));
    let pi = &r["result"]["distribution"]["pi"];
    assert!((pi["y3"].as_f64().unwrap() - 12.0 / 95.0).abs() < 1e-12);
    assert!((pi["y4"].as_f64().unwrap() - 9.0 / 19.0).abs() < 1e-12);

    let r = json(&varcause(&["local", "--omega", omega.to_str().unwrap(), "--target", "y5"]));
    let shares = &r["result"][0]["shares"];
    for (k, want) in [("y1", 57.0), ("y2", 57.0), ("y3", 32.0), ("y4", 120.0)] {
        assert!((shares[k].as_f64().unwrap() - want / 266.0).abs() < 1e-12);
    }

    let o = varcause(&["local", "--omega", omega.to_str().unwrap(), "--steps", "3", "--format", "csv"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("target,variable,share,kind\n"));
    assert!(text.contains("y6,y6,"));
}

#[test]
fn bad_quota_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let omega = write(dir.path(), "omega.json", OMEGA);
    assert_eq!(code(&varcause(&["pi", "--omega", omega.to_str().unwrap(), "--quota", "0.5,0.6"])), 1);
}

#[test]
fn identify_is_reproducible_and_echoes_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let input = generated(dir.path(), "classification", "11");
    let args = ["identify", "--lags", "1,2", "--replicates", "60", "--seed", "7", input.to_str().unwrap()];
    let a = varcause(&args);
    let b = varcause(&args);
    assert_eq!(code(&a), 0, "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
    let stderr = String::from_utf8_lossy(&a.stderr);
    assert!(stderr.contains("recommended"), "{stderr}");
    let r = json(&a);
    assert_eq!(r["bootstrap"]["seed"], 7);
    assert_eq!(r["bootstrap"]["replicates"], 60);
    assert_eq!(r["bootstrap"]["alpha"], 0.05);
    assert!(r["result"]["structure"]["classes"].as_array().is_some());

    let report = dir.path().join("id.json");
    std::fs::write(&report, &a.stdout).unwrap();
    let o = varcause(&["decompose", "--lags", "1,2", input.to_str().unwrap(), "-o", dir.path().join("o.json").to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let r = json(&varcause(&[
        "pi",
        "--omega",
        dir.path().join("o.json").to_str().unwrap(),
        "--structure",
        report.to_str().unwrap(),
    ]));
    assert!(r["result"]["classes"].as_array().is_some());
}

#[test]
fn config_file_supplies_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let input = generated(dir.path(), "hierarchy", "2");
    let cfg = write(dir.path(), "run.toml", "lags = \"1,2\"\nhorizon = \"40\"\n");
    let r = json(&varcause(&["decompose", "--config", cfg.to_str().unwrap(), input.to_str().unwrap()]));
    assert_eq!(r["result"]["horizon"], 40);
    assert_eq!(r["config"]["lags"], "1,2");
    let r = json(&varcause(&[
        "decompose", "--config", cfg.to_str().unwrap(), "--horizon", "limit", input.to_str().unwrap(),
    ]));
    assert_eq!(r["result"]["horizon"], "limit");

    let bad = write(dir.path(), "bad.toml", "lagz = \"1\"\n");
    assert_eq!(code(&varcause(&["decompose", "--config", bad.to_str().unwrap(), input.to_str().unwrap()])), 1);
}

#[test]
fn simulate_all_adds_an_average_row() {
    let o = varcause(&[
        "simulate", "--template", "all", "--datasets", "1", "--replicates", "20", "--format", "csv", "--verify",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 7);
    assert!(lines[0].starts_with("template,datasets,exact,exact_rate,omissions_1"));
    assert!(lines[6].starts_with("average,"));
}
