//! Black-box tests of the `credible` binary: output formats and exit codes.

use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_credible"))
}

#[test]
fn radius_line_format() {
    let out = bin()
        .args([
            "radius", "--alpha", "1.0", "--n", "10000", "--trunc", "1024", "--draws", "2000",
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let line = String::from_utf8(out.stdout).unwrap();
    let fields: Vec<&str> = line.trim().split(' ').collect();
    assert_eq!(fields.len(), 4);
    for (field, key) in fields.iter().zip(["r=", "lower=", "upper=", "n_min="]) {
        assert!(field.starts_with(key), "bad field {field}");
        let v: f64 = field[key.len()..].parse().unwrap();
        assert!(v > 0.0);
    }
}

#[test]
fn radius_deterministic_across_runs() {
    let run = || {
        bin()
            .args(["radius", "--alpha", "1.5", "--n", "1000", "--seed", "7"])
            .output()
            .unwrap()
            .stdout
    };
    assert_eq!(run(), run());
}

#[test]
fn estimate_prints_alpha_and_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("diag.csv");
    let out = bin()
        .args(["estimate", "--truth", "zero", "--n", "500", "--selector", "mle"])
        .arg("--out")
        .arg(&csv)
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let alpha: f64 = text
        .lines()
        .next()
        .unwrap()
        .strip_prefix("alpha=")
        .unwrap()
        .parse()
        .unwrap();
    // Zero truth drives the MLE to the top of the grid.
    assert!((alpha - 2.0).abs() < 1e-6);
    let diag = std::fs::read_to_string(&csv).unwrap();
    assert!(diag.starts_with("alpha,value,threshold\n"));
    assert_eq!(diag.lines().count(), 513);
}

#[test]
fn check_bounds_exits_zero() {
    let out = bin().arg("check-bounds").output().unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8(out.stdout).unwrap().contains("all bound sweeps passed"));
}

#[test]
fn bad_config_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(
        &cfg,
        r#"{"truth_spec": {"kind": "zero"}, "method": {"kind": "eb_mle"},
           "n_list": [100.0], "master_seed": 1, "bogus_field": true}"#,
    )
    .unwrap();
    let out = bin().args(["coverage", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn invalid_usage_exits_two() {
    let out = bin().arg("no-such-subcommand").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn coverage_stdout_has_expected_header() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cov.json");
    std::fs::write(
        &cfg,
        r#"{"truth_spec": {"kind": "zero"}, "method": {"kind": "fixed_alpha", "alpha": 1.0},
           "n_list": [200.0], "replicates": 5, "master_seed": 3}"#,
    )
    .unwrap();
    let out = bin().args(["coverage", "--config"]).arg(&cfg).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("n,replicate,hit,distance,effective_radius,alpha_used,seed_tag\n"));
    assert_eq!(text.lines().count(), 6);
    let summary = String::from_utf8(out.stderr).unwrap();
    assert!(summary.contains("coverage="));
}
