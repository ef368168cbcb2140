use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn muas(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_muas"))
        .args(args)
        .current_dir(dir)
        .env("SESSION_ROOT", dir.join("sessions"))
        .output()
        .unwrap()
}

fn ok_json(dir: &Path, args: &[&str]) -> Value {
    let out = muas(dir, args);
    assert!(
        out.status.success(),
        "muas {args:?} exited {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}

fn estimates(v: &Value) -> Vec<f64> {
    v["steps"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|s| s["kind"] == "estimate")
        .map(|s| s["outputs"]["result"]["ate_mean"].as_f64().unwrap())
        .collect()
}

fn setup(n: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    ok_json(dir.path(), &["generate", "sodium", "--n", n, "--seed", "7", "--out", "s.csv"]);
    assert!(dir.path().join("s.priors.json").exists());
    assert!(dir.path().join("s.truth.json").exists());
    dir
}

#[test]
fn adjust_without_graph_is_out_of_order() {
    let dir = setup("300");
    let d = dir.path();
    ok_json(d, &["ingest", "--session", "a", "--data", "s.csv", "--treatment", "W", "--outcome", "BP"]);
    let out = muas(d, &["adjust", "--session", "a"]);
    assert_eq!(out.status.code(), Some(1));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["error"]["code"], "OutOfOrder");

    let out = muas(d, &["discover", "--session", "a", "--discovery", "nope"]);
    assert_eq!(out.status.code(), Some(1));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["error"]["code"], "UnknownPlugin");
}

#[test]
fn pipeline_matches_composed_commands() {
    let dir = setup("2000");
    let d = dir.path();
    let common = ["--data", "s.csv", "--treatment", "W", "--outcome", "BP"];
    let mut args = vec!["pipeline", "--session", "p", "--n-runs", "3"];
    args.extend(common);
    let pipe = ok_json(d, &args);

    let mut args = vec!["ingest", "--session", "c"];
    args.extend(common);
    ok_json(d, &args);
    ok_json(d, &["discover", "--session", "c"]);
    ok_json(d, &["orient", "--session", "c", "--provider-file", "s.priors.json"]);
    ok_json(d, &["adjust", "--session", "c"]);
    let est = ok_json(d, &["estimate", "--session", "c", "--n-runs", "3"]);

    assert_eq!(estimates(&pipe), estimates(&est));
    assert_eq!(estimates(&pipe).len(), 1);
}

#[test]
fn config_file_supplies_flags_and_explicit_flags_win() {
    let dir = setup("1000");
    let d = dir.path();
    std::fs::write(
        d.join("cfg.json"),
        r#"{"data": "s.csv", "treatment": "W", "outcome": "BP", "n_runs": 2, "z": "all"}"#,
    )
    .unwrap();
    let v = ok_json(d, &["--config", "cfg.json", "pipeline", "--session", "k", "--z", "Age"]);
    let est = v["steps"].as_array().unwrap().iter().find(|s| s["kind"] == "estimate").unwrap();
    assert_eq!(est["outputs"]["z"], serde_json::json!(["Age"]));
    assert_eq!(est["outputs"]["seeds"].as_array().unwrap().len(), 2);
}

#[test]
fn stdout_envelope_imports_and_replays() {
    let dir = setup("2000");
    let d = dir.path();
    ok_json(d, &["pipeline", "--session", "x", "--data", "s.csv", "--treatment", "W", "--outcome", "BP", "--n-runs", "2"]);
    let report = muas(d, &["report", "--session", "x", "--include-data"]);
    assert!(report.status.success());
    std::fs::write(d.join("x.json"), &report.stdout).unwrap();
    let imported = ok_json(d, &["import", "--session", "y", "x.json"]);
    let orig: Value = serde_json::from_slice(&report.stdout).unwrap();
    assert_eq!(imported["steps"].as_array().unwrap().len(), orig["steps"].as_array().unwrap().len());
    assert_eq!(estimates(&imported), estimates(&orig));
    let rep = ok_json(d, &["replay", "--session", "y"]);
    assert_eq!(rep["replay"]["ok"], true, "{rep}");
}

#[test]
fn unknown_session_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = muas(dir.path(), &["report", "--session", "missing"]);
    assert_eq!(out.status.code(), Some(1));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["error"]["code"], "UnknownSession");
}
