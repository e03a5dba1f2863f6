use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const CONFIG: &str = "\
grid.days = 60
rf.n_trees = 8
mlp.epochs = 3
lstm.epochs = 2
";

fn tollcast(dir: &Path, args: &[&str]) -> Output {
    let out = dir.join("out");
    Command::new(env!("CARGO_BIN_EXE_tollcast"))
        .arg("--config")
        .arg(dir.join("study.cfg"))
        .arg("--out")
        .arg(&out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let o = tollcast(dir, args);
    assert!(
        o.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout).unwrap()
}

fn workspace() -> TempDir {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("study.cfg"), CONFIG).unwrap();
    dir
}

fn manifest(dir: &Path, command: &str) -> Value {
    let text = fs::read_to_string(dir.join("out/manifests").join(format!("{command}.json"))).unwrap();
    serde_json::from_str(&text).unwrap()
}

fn prepared() -> TempDir {
    let dir = workspace();
    ok(dir.path(), &["synth"]);
    ok(dir.path(), &["fuse"]);
    dir
}

#[test]
fn pipeline_writes_metrics_and_report() {
    let dir = prepared();
    let d = dir.path();
    let v = ok(d, &["validate"]);
    assert!(v.contains("minimum coverage of tolled bins across all series: 1.0000"), "{v}");
    ok(d, &["train", "--algo", "rf", "--horizon", "all"]);
    for h in 1..=5 {
        assert!(d.join(format!("out/models/rf_toll_h{h}.model")).is_file());
    }
    ok(d, &["--svg", "evaluate"]);
    let metrics = fs::read_to_string(d.join("out/metrics.csv")).unwrap();
    assert!(metrics.starts_with("algorithm,horizon_min,split,mae,mape,r2\n"));
    assert!(metrics.lines().any(|l| l.starts_with("rf,30,test,")));
    assert!(metrics.lines().any(|l| l.starts_with("persistence,6,test,")));
    assert!(d.join("out/errors_boxstats.csv").is_file());
    assert!(d.join("out/scatter_toll_vs_ttdiff.csv").is_file());
    assert!(d.join("out/mae_by_horizon.svg").is_file());

    ok(d, &["report"]);
    let report = fs::read_to_string(d.join("out/report.md")).unwrap();
    assert!(report.contains("| rf | 30 |"));

    let m = manifest(d, "evaluate");
    assert_eq!(m["exit_code"], 0);
    assert_eq!(m["seed"], 2018);
    assert!(m["inputs"].as_object().unwrap().keys().any(|k| k.ends_with("rf_toll_h3.model")));
}

#[test]
fn predict_prints_five_horizons_and_refuses_off_window() {
    let dir = prepared();
    let d = dir.path();
    ok(d, &["train", "--algo", "rf", "--horizon", "all"]);
    let stdout = ok(d, &["predict", "--at", "2018-07-03T07:30"]);
    let lines: Vec<&str> = stdout.lines().skip_while(|l| !l.starts_with("horizon_min")).collect();
    assert_eq!(lines[0], "horizon_min,target_time,persistence,rf");
    assert_eq!(lines.len(), 6, "{stdout}");
    for (i, l) in lines[1..].iter().enumerate() {
        let f: Vec<&str> = l.split(',').collect();
        assert_eq!(f[0], ((i + 1) * 6).to_string());
        assert!(f[3].parse::<f64>().unwrap().is_finite());
    }
    let persist: Vec<&str> = lines[1..].iter().map(|l| l.split(',').nth(2).unwrap()).collect();
    assert!(persist.windows(2).all(|w| w[0] == w[1]));

    let o = tollcast(d, &["predict", "--at", "2018-07-03T12:00"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no toll is defined"));
    let o = tollcast(d, &["predict", "--at", "2018-07-07T07:30"]);
    assert_eq!(o.status.code(), Some(2), "saturday is untolled");
}

#[test]
fn train_with_other_target_reports_both_hashes() {
    let dir = prepared();
    let o = tollcast(dir.path(), &["train", "--algo", "rf", "--horizon", "1", "--target", "ttdiff"]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("schema mismatch"), "{err}");
    let meta = fs::read_to_string(dir.path().join("out/features.meta")).unwrap();
    let found = meta.lines().find_map(|l| l.strip_prefix("schema_hash =")).unwrap().trim();
    assert!(err.contains(found), "{err}");
    assert_eq!(manifest(dir.path(), "train")["exit_code"], 2);
}

#[test]
fn usage_errors_exit_one() {
    let dir = workspace();
    let o = tollcast(dir.path(), &["synth", "--bogus"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    let o = tollcast(dir.path(), &["train", "--algo", "svm"]);
    assert_eq!(o.status.code(), Some(1));
    let o = tollcast(dir.path(), &["train", "--algo", "rf", "--horizon", "6"]);
    assert_eq!(o.status.code(), Some(1));
    let help = Command::new(env!("CARGO_BIN_EXE_tollcast")).arg("--help").output().unwrap();
    assert!(help.status.success());
}

#[test]
fn missing_inputs_are_data_errors() {
    let dir = workspace();
    assert_eq!(tollcast(dir.path(), &["fuse"]).status.code(), Some(2));
    assert_eq!(tollcast(dir.path(), &["evaluate"]).status.code(), Some(2));
    fs::write(dir.path().join("study.cfg"), "no_such_key = 1\n").unwrap();
    assert_eq!(tollcast(dir.path(), &["synth"]).status.code(), Some(2));
}

#[test]
fn reruns_reproduce_manifest_digests() {
    let dir = prepared();
    let d = dir.path();
    ok(d, &["train", "--algo", "mlp", "--horizon", "2"]);
    let first = (manifest(d, "synth"), manifest(d, "fuse"), manifest(d, "train"));
    ok(d, &["synth"]);
    ok(d, &["fuse"]);
    ok(d, &["train", "--algo", "mlp", "--horizon", "2"]);
    let second = (manifest(d, "synth"), manifest(d, "fuse"), manifest(d, "train"));
    for (a, b) in [(&first.0, &second.0), (&first.1, &second.1), (&first.2, &second.2)] {
        assert_eq!(a["outputs"], b["outputs"]);
        assert_eq!(a["inputs"], b["inputs"]);
        assert_eq!(a["config_digest"], b["config_digest"]);
    }
    assert!(!first.2["outputs"].as_object().unwrap().is_empty());
}

#[test]
fn seed_flag_changes_the_scenario() {
    let dir = workspace();
    let d = dir.path();
    ok(d, &["synth"]);
    let a = fs::read(d.join("out/toll.csv")).unwrap();
    ok(d, &["--seed", "99", "synth"]);
    let b = fs::read(d.join("out/toll.csv")).unwrap();
    assert_ne!(a, b);
    assert_eq!(manifest(d, "synth")["seed"], 99);
}
