use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str], dir: &Path, env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_kinedecay"));
    cmd.args(args).current_dir(dir).env_remove("KINEDECAY_THREADS");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn stderr_json(out: &Output) -> Value {
    let text = String::from_utf8(out.stderr.clone()).unwrap();
    let last = text.lines().last().expect("stderr is empty");
    serde_json::from_str(last).unwrap_or_else(|e| panic!("stderr is not JSON ({e}): {text}"))
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path.display().to_string()
}

const SMALL: &str = r#"{"degree_cap": 4, "k_grid": {"min": 0.1, "max": 10, "count": 5}, "trajectory": {"k": [1, 0, 0], "t_max": 10, "count": 11}}"#;

#[test]
fn tune_succeeds_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", SMALL);
    let a = run(&["tune", "--config", &cfg, "--out", "a"], dir.path(), &[]);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    let b = run(&["tune", "--config", &cfg, "--out", "b"], dir.path(), &[("KINEDECAY_THREADS", "1")]);
    assert!(b.status.success());
    let ra = std::fs::read(dir.path().join("a/tune_vmb1.json")).unwrap();
    let rb = std::fs::read(dir.path().join("b/tune_vmb1.json")).unwrap();
    assert_eq!(ra, rb);
    let report: Value = serde_json::from_slice(&ra).unwrap();
    assert!(report["lambda_min"].as_f64().unwrap() > 0.0);
    assert_eq!(report["per_k"].as_array().unwrap().len(), 5);
    assert_eq!(report["grid"].as_array().unwrap().len(), 5);
}

#[test]
fn degree_cap_one_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["tune", "--degree-cap", "1"], dir.path(), &[]);
    assert!(!out.status.success());
    assert_eq!(stderr_json(&out)["error"], "invalid_argument");
}

#[test]
fn tampered_constant_reports_offending_k() {
    let dir = tempfile::tempdir().unwrap();
    let body = SMALL.replacen('{', r#"{"kappas": [0.1, 0.1, 0.1, 10], "#, 1);
    let cfg = write_config(dir.path(), "c.json", &body);
    let out = run(&["verify", "--config", &cfg], dir.path(), &[]);
    assert!(!out.status.success());
    let err = stderr_json(&out);
    assert_eq!(err["error"], "verification_failed");
    assert!(!err["offending_k"].as_array().unwrap().is_empty());
    let report: Value = serde_json::from_slice(&std::fs::read(dir.path().join("out/verify_vmb1.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], false);
}

#[test]
fn zero_wavevector_skipped_with_warning() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{"degree_cap": 4, "k_grid": {"points": [[0, 0, 0], [1, 0, 0], [0.3, 0.4, 0]]}, "trajectory": {"t_max": 5, "count": 6}}"#,
    );
    let out = run(&["verify", "--config", &cfg], dir.path(), &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let w = stderr_json(&out);
    assert!(w["warning"].as_str().unwrap().contains("k = 0"));
    let report: Value = serde_json::from_slice(&std::fs::read(dir.path().join("out/verify_vmb1.json")).unwrap()).unwrap();
    let per_k = report["per_k"].as_array().unwrap();
    assert_eq!(per_k.len(), 2);
    for p in per_k {
        assert!(p["lambda"].as_f64().unwrap() > 0.0);
        assert!(p["gauss_max"].as_f64().unwrap() <= 1e-10);
        assert!(p["moment_max"].as_f64().unwrap() <= 1e-8);
    }
}

#[test]
fn spectrum_writes_documented_schema() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"degree_cap": 4, "models": ["vmb1", "be"], "radial": {"min": 1e-3, "max": 30, "count": 120}}"#);
    let out = run(&["spectrum", "--config", &cfg], dir.path(), &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("out/spectrum_vmb1.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("r,gap,phi,gap_over_phi"));
    assert_eq!(lines.count(), 120);
    let summary: Value = serde_json::from_slice(&std::fs::read(dir.path().join("out/spectrum.json")).unwrap()).unwrap();
    let vmb1 = &summary[0];
    assert!((vmb1["low_exp"].as_f64().unwrap() - 4.0).abs() < 0.2);
    assert!((vmb1["high_exp"].as_f64().unwrap() + 2.0).abs() < 0.2);
    let be = &summary[1];
    assert!(be["high_exp"].as_f64().unwrap().abs() < 0.2);
}

#[test]
fn compare_and_decay_write_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{"degree_cap": 4, "models": ["be"], "radial": {"min": 1e-3, "max": 30, "count": 80}, "time": {"min": 100, "max": 1e5, "count": 16}}"#,
    );
    let out = run(&["compare", "--config", &cfg], dir.path(), &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("out/compare.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("model,functional,fitted_rate,stderr,theoretical_rate,theoretical_exact,pass,kernel_low_exp,kernel_high_exp,kernel_c")
    );
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[0], "be");
    assert_eq!(row[5], "-3/4");
    assert_eq!(row[6], "true");

    let out = run(&["decay", "--config", &cfg, "--out", "d"], dir.path(), &[]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(dir.path().join("d/decay_be.csv")).unwrap();
    assert!(text.starts_with("time,norm\n"));
    assert_eq!(text.lines().count(), 17);
}

#[test]
fn moments_trajectory_schema() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", SMALL);
    let out = run(&["moments", "--config", &cfg, "--model", "vmb1,vpb1"], dir.path(), &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let traj = std::fs::read_to_string(dir.path().join("out/trajectory_vmb1.csv")).unwrap();
    assert!(traj.starts_with("time,E,D,gaussE,gaussB,norm_u,norm_E,norm_B\n"));
    let moments = std::fs::read_to_string(dir.path().join("out/moments_vpb1.csv")).unwrap();
    assert!(moments.starts_with("time,mass,momentum,energy,theta,lambda\n"));
    for line in moments.lines().skip(1) {
        for cell in line.split(',').skip(1) {
            assert!(cell.parse::<f64>().unwrap() <= 1e-8);
        }
    }
}

#[test]
fn malformed_inputs_give_error_json() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"unknown_field": 1}"#);
    let out = run(&["tune", "--config", &cfg], dir.path(), &[]);
    assert!(!out.status.success());
    assert_eq!(stderr_json(&out)["error"], "parse");

    let out = run(&["tune", "--model", "vmb3"], dir.path(), &[]);
    assert!(!out.status.success());
    assert_eq!(stderr_json(&out)["error"], "invalid_argument");

    let out = run(&["frobnicate"], dir.path(), &[]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"], "usage");

    let out = run(&["tune"], dir.path(), &[("KINEDECAY_THREADS", "zero")]);
    assert!(!out.status.success());
    assert_eq!(stderr_json(&out)["error"], "usage");

    let out = run(&["tune", "--model", "vmb2-rate", "--config", &write_config(dir.path(), "s.json", SMALL)], dir.path(), &[]);
    assert!(!out.status.success());
    assert_eq!(stderr_json(&out)["error"], "invalid_argument");
}
