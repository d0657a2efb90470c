use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn moelab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_moelab")).args(args).env_remove("MOELAB_OUT_DIR").output().unwrap()
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn csv_rows(out: &Output) -> Vec<Vec<String>> {
    let text = String::from_utf8(out.stdout.clone()).unwrap();
    text.lines().filter(|l| !l.starts_with('#')).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn moments_second_moment_matches_closed_form() {
    let v = json(&moelab(&["moments", "--seed", "7", "--k", "2", "--n", "2", "--trials", "20000", "--format", "json"]));
    let row = &v["data"][0];
    let (mean, se) = (row["mean_f2"].as_f64().unwrap(), row["stderr_f2"].as_f64().unwrap());
    assert!((mean - 0.3).abs() <= 3.0 * se, "{mean} ± {se}");
    assert!(v["checks"].as_array().unwrap().iter().all(|c| c["passed"] == true));
    assert_eq!(v["config"]["seed"], 7);
}

#[test]
fn crossover_beta_zero() {
    let v = json(&moelab(&["crossover", "--seed", "1", "--beta-zero", "--a", "1", "--theta", "0.25", "--format", "json"]));
    let lk = v["data"]["ln_k_star"].as_f64().unwrap();
    assert!((lk - 5775.89).abs() < 0.01, "{lk}");
    let zero = json(&moelab(&["crossover", "--seed", "1", "--beta-zero", "--a", "0", "--format", "json"]));
    assert_eq!(zero["data"]["ln_k_star"], "inf");
}

#[test]
fn empty_grid_is_not_an_error() {
    let out = moelab(&["gap-scan", "--seed", "1", "--k", ""]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(csv_rows(&out).len(), 1);
}

#[test]
fn range_grid_expands() {
    let out = moelab(&["typical-bound", "--seed", "1", "--k", "2:2:8", "--n", "100"]);
    assert_eq!(out.status.code(), Some(0));
    let rows = csv_rows(&out);
    let ks: Vec<&str> = rows[1..].iter().map(|r| r[1].as_str()).collect();
    assert_eq!(ks, ["2", "4", "6", "8"]);
}

#[test]
fn flag_overrides_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "seed = 11\n[moments]\ntrials = 500\nk = \"3\"\n").unwrap();
    let cfg = cfg.to_str().unwrap();
    let from_file = json(&moelab(&["moments", "--config", cfg, "--format", "json"]));
    assert_eq!(from_file["config"]["seed"], 11);
    assert_eq!(from_file["config"]["trials"], 500);
    assert_eq!(from_file["config"]["k"], serde_json::json!([3]));
    let flagged = json(&moelab(&["moments", "--config", cfg, "--seed", "12", "--trials", "600", "--format", "json"]));
    assert_eq!(flagged["config"]["seed"], 12);
    assert_eq!(flagged["config"]["trials"], 600);
}

#[test]
fn configuration_errors_exit_2() {
    assert_eq!(moelab(&["moments"]).status.code(), Some(2));
    assert_eq!(moelab(&["crossover", "--seed", "1", "--beta-zero", "--beta", "2"]).status.code(), Some(2));
    assert_eq!(moelab(&["bell", "--seed", "1", "--l", "9", "--k", "2", "--n", "2"]).status.code(), Some(2));
    assert_eq!(moelab(&["net-certify", "--seed", "1", "--theta", "0.5"]).status.code(), Some(2));
    assert_eq!(moelab(&["moments", "--seed", "1", "--k", "2:0:4"]).status.code(), Some(2));
    assert_eq!(moelab(&["moments", "--seed", "1", "--config", "/nonexistent/x.toml"]).status.code(), Some(2));
}

#[test]
fn output_is_deterministic_across_thread_counts() {
    let args = ["tail", "--seed", "5", "--k", "3", "--n", "16", "--trials", "5000"];
    let one = moelab(&[&args[..], &["--threads", "1"]].concat());
    let four = moelab(&[&args[..], &["--threads", "4"]].concat());
    assert!(one.status.success());
    assert_eq!(one.stdout, four.stdout);
    let other = moelab(&["tail", "--seed", "6", "--k", "3", "--n", "16", "--trials", "5000"]);
    assert_ne!(one.stdout, other.stdout);
}

#[test]
fn saved_channel_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ch.json");
    let p = path.to_str().unwrap();
    let sampled = json(&moelab(&["bell", "--seed", "4", "--l", "2", "--k", "2", "--n", "3", "--trials", "1", "--save-channel", p, "--format", "json"]));
    let loaded = json(&moelab(&["bell", "--seed", "4", "--channel", p, "--format", "json"]));
    assert_eq!(sampled["data"], loaded["data"]);
    assert_eq!(moelab(&["bell", "--seed", "4", "--channel", p, "--k", "3"]).status.code(), Some(2));
    std::fs::write(&path, "{}").unwrap();
    assert_eq!(moelab(&["bell", "--seed", "4", "--channel", p]).status.code(), Some(2));
}

#[test]
fn out_dir_environment_variable() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_moelab"))
        .args(["typical-bound", "--seed", "1", "--format", "json"])
        .env("MOELAB_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let written: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("typical-bound.json")).unwrap()).unwrap();
    assert_eq!(written["command"], "typical-bound");
    let explicit = dir.path().join("sub").join("t.csv");
    assert!(moelab(&["typical-bound", "--seed", "1", "--output", explicit.to_str().unwrap()]).status.success());
    assert!(Path::new(&explicit).exists());
}

#[test]
fn net_certify_and_weyl_pass_their_checks() {
    let net = json(&moelab(&["net-certify", "--seed", "2", "--l", "1", "--samples", "10000", "--trials", "3", "--format", "json"]));
    assert_eq!(net["data"]["net"]["size"], 26);
    let weyl = json(&moelab(&["weyl", "--seed", "2", "--l", "1", "--k", "2", "--n", "2", "--phi-copies", "2", "--format", "json"]));
    assert!(weyl["checks"].as_array().unwrap().iter().all(|c| c["passed"] == true || c["advisory"] == true));
}
