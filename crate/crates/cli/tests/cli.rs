use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_radsentry"));
    c.env_remove("RADSENTRY_THREADS");
    c
}

fn config() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/desk_config.json")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn summary(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stdout);
    serde_json::from_str(text.lines().last().expect("summary line")).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn help_and_usage_exit_codes() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["pipeline", "--help"]).status.code(), Some(0));
    assert_eq!(run(&[]).status.code(), Some(2));
    assert_eq!(run(&["pipeline", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(run(&["--threads", "many", "pipeline"]).status.code(), Some(2));
}

#[test]
fn missing_config_names_the_path() {
    let out = run(&["pipeline", "--config", "/nonexistent/radsentry.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/radsentry.json"));
    assert_eq!(summary(&out)["status"], "error");
}

#[test]
fn unknown_config_key_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"sede": 4}"#).unwrap();
    let out = run(&["ingest", "--config", s(&cfg), "--out", s(&dir.path().join("r.csv"))]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn pipeline_is_deterministic_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let out = run(&["pipeline", "--config", s(&config()), "--out-dir", s(&a), "--threads", "4"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let sum = summary(&out);
    assert_eq!(sum["command"], "pipeline");
    assert!(sum["gbdt_test"]["accuracy"].as_f64().unwrap() >= 0.95);

    let out = bin()
        .args(["pipeline", "--config", s(&config()), "--out-dir", s(&b)])
        .env("RADSENTRY_THREADS", "1")
        .output()
        .unwrap();
    assert!(out.status.success());
    for f in ["model.rds1", "model_full.rds1", "report.csv", "trials.csv", "summary.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f} differs");
    }
    let report = std::fs::read_to_string(a.join("report.csv")).unwrap();
    assert!(report.starts_with("model,accuracy,precision,recall,f1,pred_time_us\n"));
    assert_eq!(report.lines().count(), 7);
}

#[test]
fn stages_chain_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let p = |f: &str| dir.path().join(f);
    let cfg = config();
    let cfg = s(&cfg);

    let ok = |args: &[&str]| {
        let out = run(args);
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        summary(&out)
    };

    let ing = ok(&["ingest", "--config", cfg, "--out", s(&p("readings.csv"))]);
    assert!(ing["report"]["rows_kept"].as_u64().unwrap() > 10_000);

    let pre = ok(&["preprocess", "--readings", s(&p("readings.csv")), "--out", s(&p("features.csv"))]);
    // five continuous columns plus one per device
    assert_eq!(pre["cols"], 5 + 16);
    assert_eq!(pre["rows"], ing["report"]["rows_kept"]);
    assert!(p("features.preprocess.json").exists());

    let lab = ok(&["label", "--config", cfg, "--readings", s(&p("readings.csv")), "--out", s(&p("labeled.csv"))]);
    assert!(lab["flagged_rows"].as_u64().unwrap() > 0);

    let syn = ok(&["synth", "--config", cfg, "--data", s(&p("labeled.csv")), "--out", s(&p("attack.csv")), "--n-synthetic", "500"]);
    assert_eq!(syn["rows"].as_u64().unwrap(), lab["rows"].as_u64().unwrap() + 500);

    let data = s(&p("attack.csv")).to_string();
    let tune = ok(&["tune", "--config", cfg, "--data", &data, "--trials", "4", "--seed", "9", "--out-dir", s(dir.path())]);
    assert_eq!(tune["trials"], 4);
    assert!(p("best_params.json").exists());

    let best = s(&p("best_params.json")).to_string();
    let full = ok(&["train", "--config", cfg, "--data", &data, "--params", &best, "--out", s(&p("full.rds1"))]);
    assert!(full["test"]["f1"].as_f64().unwrap() > 0.9);
    let rf = ok(&["train", "--config", cfg, "--data", &data, "--model", "rf"]);
    assert_eq!(rf["model"], "random_forest");

    let comp = ok(&["compact", "--config", cfg, "--data", &data, "--params", &best, "--threshold", "0.90", "--out", s(&p("model.rds1"))]);
    assert!(comp["retained_gain_share"].as_f64().unwrap() >= 0.90);

    let ev = ok(&["eval", "--model", s(&p("model.rds1")), "--data", &data]);
    assert!(ev["metrics"]["accuracy"].as_f64().unwrap() > 0.9);

    let out = run(&["predict", "--model", s(&p("model.rds1")), "--input", &data]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    let rows = syn["rows"].as_u64().unwrap() as usize;
    assert_eq!(lines.len(), rows + 1);
    for l in &lines[..rows] {
        let (label, p) = l.split_once(',').unwrap();
        let p: f64 = p.parse().unwrap();
        assert_eq!(label, if p >= 0.5 { "1" } else { "0" });
    }

    ok(&["export", "--model", s(&p("model.rds1")), "--out", s(&p("copy.rds1"))]);
    assert_eq!(std::fs::read(p("model.rds1")).unwrap(), std::fs::read(p("copy.rds1")).unwrap());

    let bench = ok(&["bench", "--model", s(&p("model.rds1")), "--data", &data]);
    assert!(bench["us_per_sample"].as_f64().unwrap() > 0.0);
}

#[test]
fn corrupt_blob_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let blob = dir.path().join("bad.rds1");
    std::fs::write(&blob, b"RDS1\x01\x00garbage").unwrap();
    let out = run(&["export", "--model", s(&blob), "--out", s(&dir.path().join("x.rds1"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("decode"));
}
