use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn tpad(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tpad"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = tpad(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fails(dir: &Path, args: &[&str]) -> String {
    let out = tpad(dir, args);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.starts_with("error:"), "stderr: {stderr}");
    stderr
}

fn json_lines(path: &Path) -> Vec<Value> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn without_timestamp(path: &Path) -> Value {
    let mut v: Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    v["metadata"].as_object_mut().unwrap().remove("created_at");
    v
}

const SMALL_AE: &str = r#"{"hidden": [16, 16], "max_epochs": 20}"#;

#[test]
fn synth_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "watertank", "--n", "100", "--seed", "1", "--out", "a.csv"]);
    ok(d, &["synth", "watertank", "--n", "100", "--seed", "1", "--out", "b.csv"]);
    assert_eq!(fs::read(d.join("a.csv")).unwrap(), fs::read(d.join("b.csv")).unwrap());
    ok(d, &["synth", "watertank", "--n", "100", "--seed", "2", "--out", "c.csv"]);
    assert_ne!(fs::read(d.join("a.csv")).unwrap(), fs::read(d.join("c.csv")).unwrap());
}

#[test]
fn synth_anomaly_file() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "watertank", "--n", "100", "--seed", "1", "--out", "w.csv", "--anomalies", "50", "--mixed-out", "mix.csv"]);
    let text = fs::read_to_string(d.join("w_anomalies.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("H,q_o,label"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 50);
    assert!(rows.iter().all(|r| r.ends_with(",1")));
    let mixed = fs::read_to_string(d.join("mix.csv")).unwrap();
    assert_eq!(mixed.lines().count(), 151);
}

#[test]
fn synth_nonlin_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        d,
        &["synth", "nonlin", "--latent-dim", "2", "--obs-dim", "5", "--ops", "cube,product", "--n", "50", "--out", "pool.csv"],
    );
    let manifest: Value = serde_json::from_str(&fs::read_to_string(d.join("pool_manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["columns"].as_array().unwrap().len(), 5);
    assert_eq!(manifest["columns"][2]["formula"], "z0^3");
}

#[test]
fn invalid_parameters_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fails(d, &["synth", "watertank", "--h-min", "5", "--h-max", "2", "--out", "x.csv"]);
    fails(d, &["synth", "nonlin", "--latent-dim", "3", "--obs-dim", "2", "--ops", "cube", "--out", "x.csv"]);
    fails(d, &["synth", "nonlin", "--latent-dim", "1", "--obs-dim", "2", "--ops", "spline", "--out", "x.csv"]);
    let e = fails(d, &["fit", "pca", "--data", "missing.csv", "--p", "1", "--out", "m.json"]);
    assert!(e.contains("missing.csv"));
}

#[test]
fn fit_pca_full_basis() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "watertank", "--n", "200", "--out", "w.csv"]);
    let summary: Value = serde_json::from_str(&ok(d, &["fit", "pca", "--data", "w.csv", "--p", "2", "--out", "m.json"])).unwrap();
    let total: f64 = summary["explained"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-9);
    let model: Value = serde_json::from_str(&fs::read_to_string(d.join("m.json")).unwrap()).unwrap();
    assert_eq!(model["format_version"], 1);
    assert_eq!(model["kind"], "pca");
    assert_eq!(model["column_names"], serde_json::json!(["H", "q_o"]));
}

#[test]
fn fit_then_detect_reproduces_training_error() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("ae.json"), SMALL_AE).unwrap();
    ok(d, &["synth", "watertank", "--n", "500", "--seed", "5", "--out", "w.csv"]);
    let summary: Value = serde_json::from_str(&ok(
        d,
        &["fit", "ae", "--data", "w.csv", "--p", "1", "--config", "ae.json", "--seed", "3", "--out", "m.json"],
    ))
    .unwrap();
    ok(d, &["detect", "--model", "m.json", "--train", "w.csv", "--test", "w.csv", "--out", "r.jsonl"]);
    let rows = json_lines(&d.join("r.jsonl"));
    let mean = rows.iter().map(|r| r["recon_error"].as_f64().unwrap()).sum::<f64>() / rows.len() as f64;
    assert!((mean - summary["train_mse"].as_f64().unwrap()).abs() < 1e-9);
    for r in &rows {
        assert!(r.get("anomaly2").is_none());
        assert_eq!(r["anomaly"], r["anomaly1"]);
    }
}

#[test]
fn same_seed_same_model() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("ae.json"), SMALL_AE).unwrap();
    ok(d, &["synth", "watertank", "--n", "300", "--out", "w.csv"]);
    for out in ["a.json", "b.json"] {
        ok(d, &["fit", "ae", "--data", "w.csv", "--p", "1", "--config", "ae.json", "--seed", "4", "--out", out]);
    }
    ok(d, &["fit", "ae", "--data", "w.csv", "--p", "1", "--config", "ae.json", "--seed", "5", "--out", "c.json"]);
    assert_eq!(without_timestamp(&d.join("a.json")), without_timestamp(&d.join("b.json")));
    assert_ne!(without_timestamp(&d.join("a.json")), without_timestamp(&d.join("c.json")));
}

#[test]
fn bad_ae_config_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "watertank", "--n", "100", "--out", "w.csv"]);
    fs::write(d.join("bad.json"), r#"{"hidden_layers": [4]}"#).unwrap();
    let e = fails(d, &["fit", "ae", "--data", "w.csv", "--p", "1", "--config", "bad.json", "--out", "m.json"]);
    assert!(e.contains("config error"), "{e}");
}

#[test]
fn detect_rejects_mismatched_columns() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "watertank", "--n", "100", "--out", "w.csv"]);
    ok(d, &["synth", "nonlin", "--latent-dim", "1", "--obs-dim", "3", "--ops", "cube", "--n", "100", "--out", "p.csv"]);
    ok(d, &["fit", "pca", "--data", "w.csv", "--p", "1", "--out", "m.json"]);
    let e = fails(d, &["detect", "--model", "m.json", "--train", "w.csv", "--test", "p.csv", "--out", "r.jsonl"]);
    assert!(e.contains("config error"), "{e}");
    let e = fails(
        d,
        &["detect", "--model", "m.json", "--train", "w.csv", "--test", "w.csv", "--second-phase", "svm", "--out", "r.jsonl"],
    );
    assert!(e.contains("unknown second phase"), "{e}");
}

#[test]
fn false_positive_rate_matches_quantile() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "watertank", "--n", "100000", "--seed", "1", "--out", "train.csv"]);
    ok(d, &["synth", "watertank", "--n", "100000", "--seed", "2", "--out", "test.csv"]);
    ok(d, &["fit", "pca", "--data", "train.csv", "--p", "1", "--out", "m.json"]);
    let summary: Value = serde_json::from_str(&ok(
        d,
        &["detect", "--model", "m.json", "--train", "train.csv", "--test", "test.csv", "--quantile", "0.999", "--out", "r.jsonl"],
    ))
    .unwrap();
    let rate = summary["anomalies"].as_f64().unwrap() / 100_000.0;
    assert!((rate - 0.001).abs() <= 0.0015, "flag rate {rate}");
}

#[test]
fn mixed_anomalies_with_knn_second_phase() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("ae.json"), r#"{"hidden": [16, 16], "max_epochs": 150}"#).unwrap();
    ok(d, &["synth", "watertank", "--n", "4000", "--seed", "1", "--out", "train.csv"]);
    ok(
        d,
        &["synth", "watertank", "--n", "1000", "--seed", "2", "--out", "test.csv", "--anomalies", "100", "--mixed-out", "mix.csv"],
    );
    ok(d, &["fit", "ae", "--data", "train.csv", "--p", "1", "--config", "ae.json", "--out", "m.json"]);
    ok(
        d,
        &["detect", "--model", "m.json", "--train", "train.csv", "--test", "mix.csv", "--second-phase", "knn:k=1", "--out", "r.jsonl"],
    );
    let rows = json_lines(&d.join("r.jsonl"));
    assert_eq!(rows.len(), 1100);
    for r in &rows {
        let either = r["anomaly1"].as_bool().unwrap() || r["anomaly2"].as_bool().unwrap();
        assert_eq!(r["anomaly"].as_bool().unwrap(), either);
    }
    // Off-manifold rows come first in the anomaly block.
    let off_caught = rows[1000..1050].iter().filter(|r| r["anomaly1"] == true).count();
    assert!(off_caught >= 45, "{off_caught}");

    let report: Value = serde_json::from_str(&ok(
        d,
        &["eval", "--results", "r.jsonl", "--labels", "mix.csv", "--score", "combined", "--out", "e.json", "--roc", "roc.csv"],
    ))
    .unwrap();
    let n = ["tp", "fp", "tn", "fn"].iter().map(|k| report[k].as_u64().unwrap()).sum::<u64>();
    assert_eq!(n, 1100);
    assert!(report["auc"].as_f64().unwrap() > 0.9);
    assert!(fs::read_to_string(d.join("roc.csv")).unwrap().starts_with("fpr,tpr\n0,0\n"));
    ok(d, &["eval", "--results", "r.jsonl", "--labels", "mix.csv", "--score", "second", "--out", "e2.json"]);
}

#[test]
fn eval_needs_labels_and_scores() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "watertank", "--n", "200", "--out", "w.csv", "--anomalies", "20", "--mixed-out", "mix.csv"]);
    ok(d, &["synth", "nonlin", "--latent-dim", "1", "--obs-dim", "2", "--ops", "cube", "--n", "220", "--out", "p.csv"]);
    ok(d, &["fit", "pca", "--data", "w.csv", "--p", "1", "--out", "m.json"]);
    ok(d, &["detect", "--model", "m.json", "--train", "w.csv", "--test", "mix.csv", "--out", "r.jsonl"]);
    // Strip the label column from the test file.
    let unlabeled: String = fs::read_to_string(d.join("mix.csv"))
        .unwrap()
        .lines()
        .map(|l| l.rsplit_once(',').unwrap().0.to_string() + "\n")
        .collect();
    fs::write(d.join("unlabeled.csv"), unlabeled).unwrap();
    let e = fails(d, &["eval", "--results", "r.jsonl", "--labels", "unlabeled.csv", "--out", "e.json"]);
    assert!(e.contains("evaluation error"), "{e}");
    let e = fails(d, &["eval", "--results", "r.jsonl", "--labels", "mix.csv", "--score", "second", "--out", "e.json"]);
    assert!(e.contains("second-phase"), "{e}");
    ok(d, &["eval", "--results", "r.jsonl", "--labels", "mix.csv", "--score", "recon", "--out", "e.json"]);
    let report: Value = serde_json::from_str(&fs::read_to_string(d.join("e.json")).unwrap()).unwrap();
    assert!(report["auc"].as_f64().unwrap() > 0.5);
}

#[test]
fn sweep_writes_json_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        d,
        &["synth", "nonlin", "--latent-dim", "2", "--obs-dim", "4", "--ops", "linear_mix", "--noise", "0", "--n", "200", "--out", "lin.csv"],
    );
    let out = ok(d, &["sweep", "--data", "lin.csv", "--method", "pca", "--pmax", "4", "--folds", "4", "--out", "s.json"]);
    let summary: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(summary["estimated_dim"]["dim"], 2);
    assert_eq!(summary["estimated_dim"]["fallback"], false);
    let result: Value = serde_json::from_str(&fs::read_to_string(d.join("s.json")).unwrap()).unwrap();
    assert_eq!(result["p_values"], serde_json::json!([1, 2, 3, 4]));
    let csv = fs::read_to_string(d.join("s.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    assert!(csv.lines().nth(1).unwrap().ends_with(",pca"));
    fails(d, &["sweep", "--data", "lin.csv", "--method", "pca", "--pmax", "9", "--out", "s.json"]);
}
