use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn histcal(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_histcal")).args(args).output().unwrap()
}

fn ok(args: &[&str]) {
    let out = histcal(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn lines(path: &Path) -> Vec<Value> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// Simulated dataset in a fresh directory.
fn simulate(extra: &[&str]) -> (TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.jsonl");
    let truth = dir.path().join("truth.jsonl");
    let mut args = vec!["simulate", "--out-data", s(&data), "--out-truth", s(&truth)];
    args.extend_from_slice(extra);
    ok(&args);
    (dir, data)
}

fn argmax(v: &Value) -> usize {
    let xs: Vec<f64> = v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    (0..xs.len()).fold(0, |best, i| if xs[i] > xs[best] { i } else { best })
}

#[test]
fn simulate_writes_records_truth_and_config() {
    let (dir, data) = simulate(&["--kind", "uniform-binary", "--n-instances", "50", "--n-labels", "3", "--seed", "4"]);
    let records = lines(&data);
    assert_eq!(records.len(), 50);
    assert_eq!(records[0]["probs"].as_array().unwrap().len(), 2);
    assert_eq!(lines(&dir.path().join("truth.jsonl")).len(), 50);
    let cfg = json(&dir.path().join("data.jsonl.config.json"));
    assert_eq!(cfg["command"], "simulate");
    assert_eq!(cfg["args"]["seed"], 4);
}

#[test]
fn simulate_is_deterministic() {
    let args = ["--kind", "dirichlet", "--n-instances", "30", "--n-labels", "2", "--seed", "9"];
    let (_a, first) = simulate(&args);
    let (_b, second) = simulate(&args);
    assert_eq!(fs::read(first).unwrap(), fs::read(second).unwrap());
}

#[test]
fn simulate_logit_noise_changes_predictions_only() {
    let base = ["--kind", "dirichlet", "--n-instances", "40", "--n-labels", "2", "--seed", "3"];
    let (_a, clean) = simulate(&base);
    let mut noisy_args = base.to_vec();
    noisy_args.extend(["--logit-noise", "1.0"]);
    let (_b, noisy) = simulate(&noisy_args);
    let (clean, noisy) = (lines(&clean), lines(&noisy));
    assert!(clean.iter().zip(&noisy).any(|(a, b)| a["probs"] != b["probs"]));
    assert!(clean.iter().zip(&noisy).all(|(a, b)| a["labels"] == b["labels"] && a["features"] == b["features"]));
    assert!(noisy.iter().all(|r| r["logits"].is_array()));
}

#[test]
fn simulate_supports_many_classes() {
    let (_dir, data) = simulate(&["--kind", "dirichlet", "--k", "22", "--n-instances", "10", "--n-labels", "2"]);
    for r in lines(&data) {
        assert_eq!(r["probs"].as_array().unwrap().len(), 22);
        assert_eq!(r["labels"].as_array().unwrap().len(), 22);
    }
}

#[test]
fn evaluate_single_labeled_data_gives_nulls_and_flags() {
    let (dir, data) = simulate(&["--kind", "uniform-binary", "--n-instances", "200", "--n-labels", "1"]);
    let out = dir.path().join("report.json");
    ok(&["evaluate", "--data", s(&data), "--out", s(&out)]);
    let r = json(&out);
    assert!(r["order1"]["el_unbiased"].is_null());
    assert!(r["order2"]["l_phi"].is_null());
    assert!(r["flags"].as_array().unwrap().iter().any(|f| f.as_str().unwrap().contains(">= 2 labels")));
    assert_eq!(r["config"]["args"]["bins"], 15);
}

#[test]
fn evaluate_reports_identity_and_oracle() {
    let (dir, data) = simulate(&[
        "--kind", "dirichlet", "--n-instances", "500", "--n-labels", "3", "--distort-temperature", "2",
    ]);
    let out = dir.path().join("report.json");
    let truth = dir.path().join("truth.jsonl");
    ok(&["evaluate", "--data", s(&data), "--truth", s(&truth), "--out", s(&out)]);
    let r = json(&out);
    assert!(r["identity"]["plugin_gap"].as_f64().unwrap().abs() < 1e-9);
    assert!(r["identity"]["debiased_gap"].as_f64().unwrap().abs() < 1e-9);
    assert!(r["oracle"]["el"].as_f64().unwrap() > 0.0);
    assert!(r["deltas"]["el_unbiased"].is_number());
}

#[test]
fn alpha_fit_records_default_lambda() {
    let (dir, data) = simulate(&["--kind", "dirichlet", "--n-instances", "300", "--n-labels", "2"]);
    let model = dir.path().join("alpha.json");
    ok(&["alpha-fit", "--data", s(&data), "--model-out", s(&model)]);
    let m = json(&model);
    assert_eq!(m["mode"], "featurized");
    assert_eq!(m["lambda_alpha"], 0.005);
    assert_eq!(m["config"]["args"]["lambda"], 0.005);
    assert_eq!(m["theta"].as_array().unwrap().len(), 3);
}

#[test]
fn alpha_apply_posterior_consumes_one_label() {
    let (dir, data) = simulate(&["--kind", "dirichlet", "--n-instances", "100", "--n-labels", "3"]);
    let model = dir.path().join("alpha.json");
    let out = dir.path().join("applied.jsonl");
    ok(&["alpha-fit", "--data", s(&data), "--model-out", s(&model)]);
    ok(&["alpha-apply", "--data", s(&data), "--model", s(&model), "--posterior-label", "--out-data", s(&out)]);
    for (before, after) in lines(&data).iter().zip(lines(&out)) {
        let total = |r: &Value| r["labels"].as_array().unwrap().iter().map(|x| x.as_u64().unwrap()).sum::<u64>();
        assert_eq!(total(&after), total(before) - 1);
        let k = after["consumed_label"].as_u64().unwrap() as usize;
        assert!(before["labels"][k].as_u64().unwrap() >= 1);
        assert!(after["alpha0"].as_f64().unwrap() > 0.0);
        assert_eq!(after["posterior"].as_array().unwrap().len(), 3);
    }
    let report = dir.path().join("post.json");
    ok(&["evaluate", "--data", s(&out), "--predictions", "posterior", "--out", s(&report)]);
}

#[test]
fn temperature_round_trip_keeps_argmax() {
    let (dir, data) = simulate(&[
        "--kind", "dirichlet", "--n-instances", "3000", "--n-labels", "3", "--distort-temperature", "2",
    ]);
    let model = dir.path().join("ts.json");
    let out = dir.path().join("tempered.jsonl");
    ok(&["ts-fit", "--data", s(&data), "--model-out", s(&model)]);
    let t = json(&model)["t"].as_f64().unwrap();
    assert!((1.8..=2.2).contains(&t), "t = {t}");
    ok(&["ts-apply", "--data", s(&data), "--model", s(&model), "--out-data", s(&out)]);
    for (a, b) in lines(&data).iter().zip(lines(&out)) {
        assert_eq!(argmax(&a["probs"]), argmax(&b["probs"]));
    }
}

#[test]
fn reliability_defaults_to_fifteen_bins() {
    let (dir, data) = simulate(&["--kind", "dirichlet", "--n-instances", "200", "--n-labels", "2"]);
    let csv = dir.path().join("rel.csv");
    ok(&["reliability", "--data", s(&data), "--out-csv", s(&csv)]);
    let text = fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().next().unwrap(), "bin_lo,bin_hi,mean_pred,mean_freq,count");
    assert_eq!(text.lines().count(), 16);
    ok(&["reliability", "--data", s(&data), "--target", "disagreement", "--out-csv", s(&csv)]);
}

#[test]
fn reliability_rejects_bad_requests() {
    let (dir, data) = simulate(&["--kind", "uniform-binary", "--n-instances", "20", "--n-labels", "1"]);
    let csv = dir.path().join("rel.csv");
    let out = histcal(&["reliability", "--data", s(&data), "--target", "disagreement", "--out-csv", s(&csv)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--target cpe"));
    let out = histcal(&["reliability", "--data", s(&data), "--class", "5", "--out-csv", s(&csv)]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn exit_codes() {
    assert_eq!(histcal(&["--help"]).status.code(), Some(0));
    assert_eq!(histcal(&["simulate"]).status.code(), Some(1));
    assert_eq!(histcal(&["evaluate", "--data", "/nonexistent.jsonl", "--out", "/tmp/x.json"]).status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.jsonl");
    fs::write(&bad, "{\"id\":\"a\",\"probs\":[0.5,0.5],\"labels\":[1,1]}\nnot json\n").unwrap();
    let out = histcal(&["evaluate", "--data", s(&bad), "--out", s(&dir.path().join("r.json"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains(":2:"));
}

#[test]
fn alpha_apply_rejects_feature_mismatch() {
    let (dir, data) = simulate(&["--kind", "dirichlet", "--n-instances", "50", "--n-labels", "2"]);
    let model = dir.path().join("alpha.json");
    fs::write(
        &model,
        r#"{"mode":"featurized","lambda_alpha":0.005,"bounds":[-12.0,12.0],"theta":[1.0],"bias":0.0}"#,
    )
    .unwrap();
    let out = histcal(&["alpha-apply", "--data", s(&data), "--model", s(&model), "--out-data", s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("features"));
}
