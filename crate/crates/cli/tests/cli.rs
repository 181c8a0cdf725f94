use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rbmlab::rbm::RbmModel;
use rbmlab::rng;
use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_rbmlab");

fn rbmlab(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN).current_dir(dir).args(args).output().expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = rbmlab(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// A 16-pixel dataset with `classes` classes under `dir/data`.
fn gen_data(dir: &Path, classes: usize) {
    ok(
        dir,
        &["gen-data", "--out", "data", "--n-pixels", "16", "--n-classes", &classes.to_string(), "--n-train", "10", "--n-test", "5", "--rng-seed", "3"],
    );
}

fn data_flags(classes: usize) -> Vec<String> {
    ["--train-file", "data/train.csv", "--test-file", "data/test.csv", "--n-pixels", "16", "--n-classes"]
        .iter()
        .map(|s| s.to_string())
        .chain([classes.to_string()])
        .collect()
}

fn train(dir: &Path, name: &str, extra: &[&str]) -> PathBuf {
    let mut args: Vec<String> = vec!["train".into()];
    args.extend(data_flags(4));
    for a in ["--n-hidden", "6", "--epochs", "1", "--ais-interval", "0", "--out-dir", "runs", "--run-name", name] {
        args.push(a.into());
    }
    args.extend(extra.iter().map(|s| s.to_string()));
    let argv: Vec<&str> = args.iter().map(String::as_str).collect();
    ok(dir, &argv);
    dir.join("runs").join(name)
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn one_epoch_writes_one_metrics_row() {
    let tmp = tempfile::tempdir().unwrap();
    gen_data(tmp.path(), 4);
    let run = train(tmp.path(), "a", &[]);
    let metrics = fs::read_to_string(run.join("metrics.csv")).unwrap();
    let lines: Vec<&str> = metrics.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("epoch,classification_error,log_likelihood"));
    assert!(lines[1].starts_with("1,"));
    assert!(run.join("checkpoints/epoch_1.json").exists());
    let m = read_json(&run.join("manifest.json"));
    assert_eq!(m["status"], "ok");
    assert_eq!(m["command"], "train");
}

#[test]
fn hybrid_splits_seeds_evenly() {
    let tmp = tempfile::tempdir().unwrap();
    gen_data(tmp.path(), 4);
    let run = train(
        tmp.path(),
        "h",
        &["--seed-strategy", "hybrid", "--mix-fraction", "0.5", "--n-samples", "1000", "--n-reads", "40", "--sa-sweeps", "20"],
    );
    let metrics = fs::read_to_string(run.join("metrics.csv")).unwrap();
    let header: Vec<&str> = metrics.lines().next().unwrap().split(',').collect();
    let row: Vec<&str> = metrics.lines().nth(1).unwrap().split(',').collect();
    let col = |name: &str| row[header.iter().position(|h| *h == name).unwrap()];
    assert_eq!(col("seed_strategy"), "hybrid");
    assert_eq!(col("seeds_from_annealer"), "500");
    assert_eq!(col("seeds_from_tps"), "500");
}

#[test]
fn manifest_replay_reproduces_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    gen_data(tmp.path(), 4);
    let a = train(tmp.path(), "first", &["--rng-seed", "11", "--k-steps", "2"]);
    let manifest = a.join("manifest.json");
    let b = train(tmp.path(), "second", &["--config", manifest.to_str().unwrap()]);
    let ca = fs::read(a.join("checkpoints/epoch_1.json")).unwrap();
    let cb = fs::read(b.join("checkpoints/epoch_1.json")).unwrap();
    assert_eq!(ca, cb);
    assert_eq!(read_json(&b.join("manifest.json"))["config"], read_json(&manifest)["config"]);
}

#[test]
fn zero_model_classifies_every_pattern() {
    let tmp = tempfile::tempdir().unwrap();
    gen_data(tmp.path(), 4);
    let mut args: Vec<String> = vec!["classify".into(), "--checkpoint".into(), "zero-model".into()];
    args.extend(data_flags(4));
    args.extend(["--n-hidden", "5", "--out-dir", "runs", "--run-name", "z"].map(String::from));
    let argv: Vec<&str> = args.iter().map(String::as_str).collect();
    let stdout = ok(tmp.path(), &argv);
    assert!(stdout.contains("predicted frequencies"));
    let s = read_json(&tmp.path().join("runs/z/classify.json"));
    assert_eq!(s["n_patterns"], 20);
    let total: f64 = s["predicted_frequencies"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-12);
    let preds = fs::read_to_string(tmp.path().join("runs/z/predictions.csv")).unwrap();
    assert_eq!(preds.lines().count(), 21);
}

fn small_checkpoint(dir: &Path, nv: usize, nh: usize) -> PathBuf {
    let p = dir.join("model.json");
    RbmModel::random_uniform(nv, nh, 1.0, &mut rng::from_seed(5)).save(&p).unwrap();
    p
}

#[test]
fn ais_matches_enumeration_on_small_model() {
    let tmp = tempfile::tempdir().unwrap();
    let ckpt = small_checkpoint(tmp.path(), 6, 4);
    let stdout = ok(
        tmp.path(),
        &["ais", "--checkpoint", ckpt.to_str().unwrap(), "--verify-exact", "--out-dir", "runs", "--run-name", "x"],
    );
    assert!(stdout.contains("exact ln Z"));
    let r = read_json(&tmp.path().join("runs/x/ais.json"));
    let gap = r["gap"].as_f64().unwrap();
    let se = r["std_err"].as_f64().unwrap();
    assert!(gap.abs() < 4.0 * se + 1e-3, "gap {gap}, std err {se}");
}

#[test]
fn cf_without_replay_fills_the_matrix() {
    let tmp = tempfile::tempdir().unwrap();
    gen_data(tmp.path(), 10);
    let mut args: Vec<String> = vec!["cf".into()];
    args.extend(data_flags(10));
    args.extend(
        ["--mode", "none", "--epochs-per-task", "2", "--n-hidden", "6", "--vote-steps", "5", "--out-dir", "runs", "--run-name", "c"]
            .map(String::from),
    );
    let argv: Vec<&str> = args.iter().map(String::as_str).collect();
    ok(tmp.path(), &argv);
    let run = tmp.path().join("runs/c");
    let csv = fs::read_to_string(run.join("cf_matrix.csv")).unwrap();
    let rows: Vec<Vec<&str>> = csv.lines().map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().all(|r| r.len() == 6));
    for r in &rows[1..] {
        for cell in &r[1..] {
            let e: f64 = cell.parse().unwrap();
            assert!((0.0..=1.0).contains(&e));
        }
    }
    for k in 1..=5 {
        assert!(run.join(format!("checkpoints/task_{k}.json")).exists());
    }
}

#[test]
fn exhaustive_valleys_cover_all_states() {
    let tmp = tempfile::tempdir().unwrap();
    let ckpt = small_checkpoint(tmp.path(), 8, 8);
    ok(
        tmp.path(),
        &["valleys", "--checkpoint", ckpt.to_str().unwrap(), "--source", "exhaustive", "--include-tps", "false", "--out-dir", "runs", "--run-name", "v"],
    );
    let records = fs::read_to_string(tmp.path().join("runs/v/valleys/exhaustive_65536_records.csv")).unwrap();
    let members: usize = records.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse::<usize>().unwrap()).sum();
    assert_eq!(members, 1 << 16);
    let summary = read_json(&tmp.path().join("runs/v/valleys.json"));
    assert_eq!(summary[0]["size"], 65536);
}

#[test]
fn exit_codes_separate_usage_from_runtime_errors() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(rbmlab(tmp.path(), &["--help"]).status.code(), Some(0));
    assert_eq!(rbmlab(tmp.path(), &["train", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(rbmlab(tmp.path(), &["train", "--epochs", "0"]).status.code(), Some(1));
    // missing input file is a runtime failure
    let out = rbmlab(tmp.path(), &["ais", "--checkpoint", "missing.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.json"));
    let out = rbmlab(tmp.path(), &["train", "--epochs", "1", "--train-file", "nope.csv"]);
    assert_eq!(out.status.code(), Some(2));
}
