use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ddrhc"))
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Writes a copy of a shipped config with `edit` applied.
fn edited(dir: &Path, name: &str, edit: impl FnOnce(&mut Value)) -> PathBuf {
    let mut v: Value = serde_json::from_str(&std::fs::read_to_string(config(name)).unwrap()).unwrap();
    edit(&mut v);
    let path = dir.join(format!("edited_{name}"));
    std::fs::write(&path, serde_json::to_string(&v).unwrap()).unwrap();
    path
}

#[test]
fn example1_pipeline_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("example1.json");
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        ok(&["gen-data", "--config", s(&cfg), "--out", s(out)]);
        let data = out.join("data.json");
        ok(&["invariant", "--config", s(&cfg), "--data", s(&data), "--out", s(out)]);
        let poly = out.join("invariant.json");
        let stdout = ok(&[
            "simulate", "--config", s(&cfg), "--data", s(&data), "--polytope", s(&poly), "--out", s(out), "--mode", "both",
        ]);
        assert!(stdout.contains("rh: 50 steps, safe: true"), "{stdout}");
        assert!(stdout.contains("static: 50 steps, safe: true"), "{stdout}");
    }
    let triples: Value = serde_json::from_str(&std::fs::read_to_string(a.join("data.json")).unwrap()).unwrap();
    assert_eq!(triples.as_array().unwrap().len(), 10);
    for file in [
        "data.json",
        "invariant.json",
        "invariant_diagnostics.json",
        "trajectory_rh.csv",
        "trajectory_rh.json",
        "trajectory_static.csv",
        "trajectory_static.json",
    ] {
        assert_eq!(std::fs::read(a.join(file)).unwrap(), std::fs::read(b.join(file)).unwrap(), "{file} differs");
    }
    let diag: Value = serde_json::from_str(&std::fs::read_to_string(a.join("invariant_diagnostics.json")).unwrap()).unwrap();
    assert!(diag["iterations"].as_u64().unwrap() <= 20);
    assert_eq!(diag["certification"]["failures"], 0);
    let csv = std::fs::read_to_string(a.join("trajectory_rh.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "k,x_1,x_2,u_1,v_1,v_2,lambda,psi,cs_rows,solve_ms");
    assert_eq!(csv.lines().count(), 51);
}

#[test]
fn check_reports_agreement_and_certificate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("example1.json");
    ok(&["gen-data", "--config", s(&cfg), "--out", s(dir.path())]);
    let data = dir.path().join("data.json");
    let stdout = ok(&["check", "--config", s(&cfg), "--data", s(&data), "--state", "1,0.8"]);
    let report: Value = serde_json::from_str(&stdout).unwrap();
    assert!(report["difference"].as_f64().unwrap() <= 1e-6);
    assert_eq!(report["certificate_verified"], true);
    assert!(report["lambda_dual"].as_f64().unwrap() > 0.0);
}

#[test]
fn stable_plant_keeps_the_whole_box() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = edited(dir.path(), "example1.json", |v| {
        v["plant"]["a"] = serde_json::json!([[0.5, 0.0], [0.0, 0.5]]);
        v["plant"]["epsilon"] = serde_json::json!(0.01);
    });
    ok(&["gen-data", "--config", s(&cfg), "--out", s(dir.path())]);
    let data = dir.path().join("data.json");
    ok(&["invariant", "--config", s(&cfg), "--data", s(&data), "--out", s(dir.path())]);
    let poly: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("invariant.json")).unwrap()).unwrap();
    let rows = poly["F"].as_array().unwrap();
    assert_eq!(rows.len(), 4);
    for (row, g) in rows.iter().zip(poly["g"].as_array().unwrap()) {
        let r: Vec<f64> = row.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
        assert!((r[0].abs() + r[1].abs() - 1.0).abs() < 1e-9 && r[0] * r[1] == 0.0);
        assert!((g.as_f64().unwrap() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn zero_noise_data_pins_the_plant() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = edited(dir.path(), "example1.json", |v| {
        v["plant"]["epsilon"] = serde_json::json!(0.0);
    });
    ok(&["gen-data", "--config", s(&cfg), "--out", s(dir.path())]);
    let triples: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("data.json")).unwrap()).unwrap();
    for t in triples.as_array().unwrap() {
        let x: Vec<f64> = serde_json::from_value(t["x"].clone()).unwrap();
        let u: Vec<f64> = serde_json::from_value(t["u"].clone()).unwrap();
        let xn: Vec<f64> = serde_json::from_value(t["x_next"].clone()).unwrap();
        assert!((xn[0] + 0.99 * x[1]).abs() < 1e-14);
        assert!((xn[1] - 0.99 * x[0] - u[0]).abs() < 1e-14);
    }
    // The controller needs a positive bound.
    let out = run(&["check", "--config", s(&cfg), "--data", s(&dir.path().join("data.json")), "--state", "0.5,0.5"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn too_few_samples_fail() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = edited(dir.path(), "example1.json", |v| v["training"]["samples"] = serde_json::json!(1));
    let out = run(&["gen-data", "--config", s(&cfg), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("training data"));
}

#[test]
fn initial_state_outside_invariant_set_fails() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("example1.json");
    ok(&["gen-data", "--config", s(&cfg), "--out", s(dir.path())]);
    let data = dir.path().join("data.json");
    let poly = dir.path().join("small.json");
    std::fs::write(&poly, r#"{"F": [[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]], "g": [0.5, 0.5, 0.5, 0.5]}"#).unwrap();
    let out = run(&["simulate", "--config", s(&cfg), "--data", s(&data), "--polytope", s(&poly), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("outside the invariant set"));
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.json");
    assert_eq!(run(&["gen-data", "--config", s(&missing)]).status.code(), Some(2));
    let bad = edited(dir.path(), "example1.json", |v| v["schema"] = serde_json::json!(9));
    assert_eq!(run(&["gen-data", "--config", s(&bad)]).status.code(), Some(2));
    let cfg = config("example1.json");
    ok(&["gen-data", "--config", s(&cfg), "--out", s(dir.path())]);
    let out = run(&["check", "--config", s(&cfg), "--data", s(&dir.path().join("data.json")), "--state", "1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn collapsed_invariant_set_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    // Unstable, weakly actuated plant with large noise.
    let cfg = edited(dir.path(), "example1.json", |v| {
        v["plant"]["a"] = serde_json::json!([[2.0, 0.0], [0.0, 0.5]]);
        v["plant"]["epsilon"] = serde_json::json!(0.1);
    });
    ok(&["gen-data", "--config", s(&cfg), "--out", s(dir.path())]);
    let out = run(&["invariant", "--config", s(&cfg), "--data", s(&dir.path().join("data.json")), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}
