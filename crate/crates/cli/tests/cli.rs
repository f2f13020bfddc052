use std::path::Path;
use std::process::{Command, Output};

fn recoslip(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_recoslip")).args(args).output().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn unknown_flags_are_rejected() {
    let out = recoslip(&["gen", "--preset", "s", "--out", "x", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--bogus"));
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("train.toml");
    std::fs::write(&cfg, "[reco_slip]\nstepz = 3\n").unwrap();
    let out = recoslip(&["train", "--method", "reco-slip", "--data", "nowhere", "--config", path(&cfg), "--out", path(dir.path())]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("stepz"));
}

#[test]
fn gen_writes_dataset_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = recoslip(&["--quiet", "gen", "--preset", "ns", "--seed", "2", "--out", path(dir.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["nodes.csv", "edges.csv", "novel.csv", "scar.json", "manifest.json"] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["invocation"]["command"], "gen");
    assert_eq!(manifest["seeds"], serde_json::json!([2]));
}

#[test]
fn eval_reports_metrics_as_json() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n);
    assert!(recoslip(&["--quiet", "gen", "--preset", "s", "--out", path(&p("data"))]).status.success());
    let cfg = p("train.toml");
    std::fs::write(&cfg, "[baseline]\nmax_epochs = 20\n").unwrap();
    let train = recoslip(&[
        "--quiet", "train", "--method", "domain-disc", "--data", path(&p("data")), "--config", path(&cfg), "--seed", "1",
        "--out", path(&p("run")),
    ]);
    assert!(train.status.success(), "{}", String::from_utf8_lossy(&train.stderr));
    let eval = recoslip(&[
        "eval", "--scores", path(&p("run/scores.csv")), "--data", path(&p("data")), "--seed", "1", "--out", path(&p("ev")),
    ]);
    assert!(eval.status.success(), "{}", String::from_utf8_lossy(&eval.stderr));
    let v: serde_json::Value = serde_json::from_slice(&eval.stdout).unwrap();
    let auroc = v["auroc"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&auroc));
    assert!(v["novel_test_nodes"].as_u64().unwrap() > 0);
    assert!(p("ev/eval.json").exists());
}
