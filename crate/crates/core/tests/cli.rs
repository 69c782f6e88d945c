//! The `vrfam` binary end to end.

mod common;

use std::path::Path;
use std::process::{Command, Output};

fn vrfam(args: &[&str]) -> Output {
    Command::new(common::vrfam_bin()).args(args).env_remove("VRFAM_DATA").output().expect("run vrfam")
}

fn ok(args: &[&str]) -> String {
    let out = vrfam(args);
    assert!(out.status.success(), "{args:?} failed:\n{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn fails(args: &[&str]) -> String {
    let out = vrfam(args);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    String::from_utf8(out.stderr).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&common::read(&dir.join("manifest.json"))).unwrap()
}

#[test]
fn synth_counts_and_reproducibility() {
    let tmp = tempfile::tempdir().unwrap();
    let full = tmp.path().join("full");
    ok(&["synth", "--out", s(&full)]);
    assert_eq!(manifest(&full)["sessions"], 560);
    assert_eq!(manifest(&full)["users"], 14);

    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let out = ok(&["synth", "--out", s(dir), "--users-per-class", "2", "--codes", "2648", "--seed", "4"]);
        assert!(out.contains("40 sessions"), "{out}");
    }
    assert_eq!(manifest(&a)["sessions_sha256"], manifest(&b)["sessions_sha256"]);
    assert!(fails(&["synth", "--out", s(&a)]).contains("--force"));
    assert!(fails(&["synth", "--out", s(&a), "--delta", "huge"]).contains("delta"));
}

#[test]
fn train_eval_report_single_cell() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, runs, report) = (tmp.path().join("data"), tmp.path().join("runs"), tmp.path().join("report"));
    ok(&["synth", "--out", s(&data), "--users-per-class", "2", "--sessions", "2", "--codes", "2648", "--delta", "strong"]);
    let out = Command::new(common::vrfam_bin())
        .args(["train", "--out", s(&runs), "--kind", "pct", "--window", "120", "--code", "2648", "--epochs", "1"])
        .env("VRFAM_DATA", &data)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("[pct_w120_2648] epoch 1/1"));
    let dirs: Vec<_> = std::fs::read_dir(&runs).unwrap().collect();
    assert_eq!(dirs.len(), 1);
    let cell = runs.join("pct_w120_2648");
    for f in ["DONE", "config.json", "metrics.csv", "record.json", "roc.csv", "checkpoint.bin"] {
        assert!(cell.join(f).is_file(), "missing {f}");
    }
    let config: serde_json::Value = serde_json::from_str(&common::read(&cell.join("config.json"))).unwrap();
    assert_eq!(config["split_seed"], 0);
    assert_eq!(config["setup"]["train"]["epochs"], 1);
    assert!(config["data_sha256"].is_string());

    let stderr = fails(&["train", "--data", s(&data), "--out", s(&runs), "--kind", "pct", "--window", "120", "--code", "2648"]);
    assert!(stderr.contains("--force"), "{stderr}");

    assert!(ok(&["eval", "--runs", s(&runs), "--data", s(&data)]).contains("ok"));
    assert!(cell.join("eval.json").is_file());

    ok(&["report", "--runs", s(&runs), "--out", s(&report)]);
    let acc = common::read(&report.join("accuracy.csv"));
    assert_eq!(acc.lines().count(), 2);
    assert!(acc.starts_with("KIND CODE,120\nPCT 2648,"));
    let svg = common::read(&report.join("roc.svg"));
    assert_eq!(svg.matches("<g class=\"panel\"").count(), 1);
}

#[test]
fn data_problems_stop_before_training() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, runs) = (tmp.path().join("data"), tmp.path().join("runs"));
    let missing = fails(&["train", "--data", s(&tmp.path().join("nope")), "--out", s(&runs), "--kind", "mlp", "--window", "50", "--code", "2648"]);
    assert!(missing.contains("nope"), "{missing}");
    ok(&["synth", "--out", s(&data), "--users-per-class", "2", "--sessions", "1", "--codes", "2648"]);
    // The dataset has no sessions for this code.
    let err = fails(&["train", "--data", s(&data), "--out", s(&runs), "--kind", "mlp", "--window", "50", "--code", "1379"]);
    assert!(err.contains("1379"), "{err}");
    assert!(!runs.exists());
    assert!(fails(&["train", "--data", s(&data), "--out", s(&runs)]).contains("--matrix"));
    assert!(fails(&["train", "--out", s(&runs), "--kind", "mlp", "--window", "50", "--code", "2648"]).contains("VRFAM_DATA"));
}

#[test]
fn report_without_runs_names_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    let err = fails(&["report", "--runs", s(tmp.path()), "--out", s(&tmp.path().join("r"))]);
    assert!(err.contains("no completed runs") && err.contains(s(tmp.path())), "{err}");
}

#[test]
fn gradcheck_prints_a_passing_table() {
    let out = ok(&["gradcheck"]);
    assert!(out.contains("conv1d") && out.contains("scaled_dot_attention"));
    assert!(!out.contains("FAIL"));
    assert!(out.lines().filter(|l| l.ends_with("PASS")).count() >= 30);
}
