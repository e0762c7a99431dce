//! End-to-end tests of the `rct-late` binary: report contents, output
//! formats, and exit codes.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_rct-late")
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/data")
        .join(name)
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, body).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().unwrap()
}

const SIMPLE_CONFIG: &str = r#"{
    "design": "simple",
    "columns": {"outcome": "y", "receipt": "d", "assignment": "t"},
    "variance_methods": ["db", "iv"]
}"#;

#[test]
fn estimate_hand_example_to_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SIMPLE_CONFIG);
    let out = run(&[
        "estimate",
        "--data",
        fixture("simple4.csv").to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["design"], "simple");
    assert_eq!(report["n"], 4);
    assert!((report["tau_late"].as_f64().unwrap() - 2.0).abs() < 1e-10);
    let se = report["methods"][0]["se"].as_f64().unwrap();
    assert!((se - std::f64::consts::SQRT_2).abs() < 1e-5);
    assert!(report["warnings"]
        .as_array()
        .unwrap()
        .iter()
        .any(|w| w == "weak_instrument"));
}

#[test]
fn estimate_csv_output() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SIMPLE_CONFIG);
    let out_path = dir.path().join("report.csv");
    let out = run(&[
        "estimate",
        "--data",
        fixture("simple4.csv").to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&out_path).unwrap();
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers = reader.headers().unwrap().clone();
    let rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 2); // db and iv
    let tau_idx = headers.iter().position(|h| h == "tau_late").unwrap();
    let tau: f64 = rows[0].get(tau_idx).unwrap().parse().unwrap();
    assert!((tau - 2.0).abs() < 1e-12);
}

#[test]
fn blocked_report_has_per_block_rows() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        r#"{
            "design": "blocked",
            "columns": {"outcome": "y", "receipt": "d", "assignment": "t", "block": "site"}
        }"#,
    );
    let out = run(&[
        "estimate",
        "--data",
        fixture("blocked8.csv").to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["h"], 2);
    assert_eq!(report["per_block"].as_array().unwrap().len(), 2);
}

#[test]
fn clustered_report_counts_clusters() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        r#"{
            "design": "clustered",
            "columns": {"outcome": "y", "receipt": "d", "assignment": "t", "cluster": "school"}
        }"#,
    );
    let out = run(&[
        "estimate",
        "--data",
        fixture("clustered12.csv").to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["m"], 6);
    assert_eq!(report["design"], "clustered");
}

#[test]
fn diagnose_prints_first_stage() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SIMPLE_CONFIG);
    let out = run(&[
        "diagnose",
        "--data",
        fixture("simple4.csv").to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("first-stage F: 1.000000"));
    assert!(text.contains("weak"));
    assert!(text.contains("n: 4 (treated 2, control 2)"));
}

#[test]
fn usage_errors_exit_1() {
    let out = run(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
    let out = run(&["estimate", "--data"]);
    assert_eq!(out.status.code(), Some(1));
    // Help and version succeed.
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["--version"]).status.code(), Some(0));
}

#[test]
fn data_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SIMPLE_CONFIG);
    // Non-binary receipt value.
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "y,d,t\n4,2,1\n1,0,1\n2,0,0\n1,0,0\n").unwrap();
    let out = run(&[
        "estimate",
        "--data",
        bad.to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("row 1"), "stderr: {stderr}");

    // Missing column.
    let config2 = dir.path().join("missing.json");
    std::fs::write(
        &config2,
        r#"{"design": "simple", "columns": {"outcome": "score", "receipt": "d", "assignment": "t"}}"#,
    )
    .unwrap();
    let out = run(&[
        "estimate",
        "--data",
        fixture("simple4.csv").to_str().unwrap(),
        "--config",
        config2.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn numerical_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SIMPLE_CONFIG);
    // Receipt never varies: zero compliance effect.
    let flat = dir.path().join("flat.csv");
    std::fs::write(&flat, "y,d,t\n4,0,1\n1,0,1\n2,0,0\n1,0,0\n").unwrap();
    let out = run(&[
        "estimate",
        "--data",
        flat.to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8(out.stderr)
        .unwrap()
        .contains("compliance"));
}

#[test]
fn simulate_writes_csv_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("sim.json");
    std::fs::write(
        &config,
        r#"{"n": 80, "p": 0.5, "dbar0": 0.2, "dbar1": 0.6,
            "num_datasets": 1, "reps": 200, "seed": 3,
            "variance_methods": ["db"]}"#,
    )
    .unwrap();
    let json_path = dir.path().join("sim_out.json");
    let csv_path = dir.path().join("sim_out.csv");
    for out_path in [&json_path, &csv_path] {
        let out = run(&[
            "simulate",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out_path.to_str().unwrap(),
        ]);
        assert!(
            out.status.success(),
            "stderr: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&json_path).unwrap()).unwrap();
    let json_coverage = report["methods"][0]["coverage"].as_f64().unwrap();

    let csv_text = std::fs::read_to_string(&csv_path).unwrap();
    let mut reader = csv::Reader::from_reader(csv_text.as_bytes());
    let headers = reader.headers().unwrap().clone();
    let row = reader.records().next().unwrap().unwrap();
    let idx = headers.iter().position(|h| h == "coverage").unwrap();
    let csv_coverage: f64 = row.get(idx).unwrap().parse().unwrap();
    assert_eq!(csv_coverage.to_bits(), json_coverage.to_bits());
}

#[test]
fn estimate_rejects_unknown_config_fields() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        r#"{"design": "simple",
            "columns": {"outcome": "y", "receipt": "d", "assignment": "t"},
            "not_a_field": true}"#,
    );
    let out = run(&[
        "estimate",
        "--data",
        fixture("simple4.csv").to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}
