use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use qdot::io::{file_digest, read_counts, read_timeline, read_trajectory, ExperimentBundle};

fn qdot(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qdot")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = qdot(args);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{args:?}\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// simulate → sense → smooth → estimate → histogram in `dir`.
fn pipeline(dir: &Path, duration: &str) {
    let d = s(dir);
    ok(&["simulate", "--bundle", d, "--duration", duration, "--seed", "7"]);
    let cfg = dir.join("config.json");
    let c = s(&cfg);
    ok(&["sense", "--bundle", d, "--config", c]);
    ok(&["smooth", "--bundle", d, "--config", c]);
    ok(&["estimate", "--bundle", d, "--config", c, "--method", "bayes", "--grid-n", "7"]);
}

#[test]
fn pipeline_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    pipeline(a.path(), "30");
    pipeline(b.path(), "30");
    for name in ["config.json", "trajectory.csv", "counts.csv", "timeline.csv", "report.json", "likelihood.csv"] {
        let (x, y) = (a.path().join(name), b.path().join(name));
        assert_eq!(file_digest(&x).unwrap(), file_digest(&y).unwrap(), "{name}");
    }
    let summary = ok(&["histogram", "--bundle", s(a.path()), "--config", s(&a.path().join("config.json"))]);
    assert!(summary.contains("dwell_histogram.csv"), "{summary}");
    assert!(a.path().join("dwell.json").exists());
}

#[test]
fn inference_never_needs_the_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let d = s(dir.path());
    ok(&["simulate", "--bundle", d, "--duration", "20", "--seed", "3"]);
    ok(&["sense", "--bundle", d, "--duration", "20", "--seed", "3"]);
    fs::remove_file(dir.path().join("trajectory.csv")).unwrap();
    ok(&["smooth", "--bundle", d]);
    ok(&["estimate", "--bundle", d, "--method", "baum-welch", "--n-inner", "2"]);
    let b = ExperimentBundle::new(dir.path());
    let (rec, header) = read_counts(&b.counts()).unwrap();
    assert_eq!(rec.len(), 2000);
    assert!(header.inputs.contains_key("trajectory.csv"));
}

#[test]
fn zero_duration_gives_empty_files_with_headers() {
    let dir = tempfile::tempdir().unwrap();
    let d = s(dir.path());
    ok(&["simulate", "--bundle", d, "--duration", "0"]);
    ok(&["sense", "--bundle", d, "--duration", "0"]);
    ok(&["smooth", "--bundle", d, "--duration", "0"]);
    let b = ExperimentBundle::new(dir.path());
    assert_eq!(read_trajectory(&b.trajectory()).unwrap().n_steps(), 0);
    assert!(read_counts(&b.counts()).unwrap().0.is_empty());
    let (tl, _) = read_timeline(&b.timeline()).unwrap();
    assert!(tl.is_empty());
}

#[test]
fn singleton_grid_returns_its_value() {
    let dir = tempfile::tempdir().unwrap();
    let d = s(dir.path());
    ok(&["simulate", "--bundle", d, "--duration", "10"]);
    ok(&["sense", "--bundle", d]);
    ok(&["estimate", "--bundle", d, "--method", "bayes", "--grid-lo", "4.4", "--grid-hi", "4.4", "--grid-n", "1"]);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["estimate"]["omega"].as_f64(), Some(4.4));
    assert_eq!(report["bayes"]["posterior"][0].as_f64(), Some(1.0));
}

#[test]
fn mismatched_bin_duration_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let d = s(dir.path());
    ok(&["simulate", "--bundle", d, "--duration", "5"]);
    ok(&["sense", "--bundle", d]);
    let out = qdot(&["smooth", "--bundle", d, "--bin-dt", "0.02"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bin duration"));
}

#[test]
fn exit_codes() {
    assert_eq!(qdot(&[]).status.code(), Some(2));
    assert_eq!(qdot(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(qdot(&["simulate", "--omega", "abc"]).status.code(), Some(2));
    assert_eq!(qdot(&["--help"]).status.code(), Some(0));
    let dir = tempfile::tempdir().unwrap();
    let d = s(dir.path());
    // Invalid parameter values and missing inputs are usage errors.
    assert_eq!(qdot(&["simulate", "--bundle", d, "--gamma-down", "-1"]).status.code(), Some(2));
    assert_eq!(qdot(&["smooth", "--bundle", d]).status.code(), Some(2));
    // Counts recorded by a sensor that never clicks are impossible: numerical failure.
    let silent = qdot::sensor::CountRecord::new(0.01, vec![0, 0, 3, 0], 0.0, 0.0, 0);
    let counts = ExperimentBundle::new(dir.path()).counts();
    qdot::io::write_counts(&counts, &silent, Default::default()).unwrap();
    let out = qdot(&["smooth", "--bundle", d, "--r0", "0", "--r1", "0"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn config_file_and_flags_combine() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    fs::write(&cfg, r#"{"duration": 3.0, "seed": 99, "params": {"omega": 6.0, "gamma_up": 2.5}}"#).unwrap();
    let d = s(dir.path());
    ok(&["simulate", "--bundle", d, "--config", s(&cfg), "--omega", "7.0"]);
    let traj = read_trajectory(&dir.path().join("trajectory.csv")).unwrap();
    assert_eq!(traj.params.omega, 7.0);
    assert_eq!(traj.n_steps(), 3000);
    assert_eq!(traj.params.gamma_up, 2.5);
    assert_eq!(traj.params.gamma_down, 3.0);
    fs::write(&cfg, r#"{"duration": 3.0, "sede": 99}"#).unwrap();
    assert_eq!(qdot(&["simulate", "--bundle", d, "--config", s(&cfg)]).status.code(), Some(2));
}
