//! The `mdn` binary: subcommands, outputs and exit codes.

use std::path::Path;
use std::process::{Command, Output};

fn mdn(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mdn")).args(args).current_dir(dir).output().expect("binary runs")
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    for args in [&[][..], &["frobnicate"], &["gradcheck", "--bogus"]] {
        let out = mdn(args, dir.path());
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(String::from_utf8_lossy(&out.stderr).to_lowercase().contains("usage"), "{args:?}");
    }
    assert_eq!(mdn(&["gradcheck", "--mode", "sum"], dir.path()).status.code(), Some(2));
    assert_eq!(mdn(&["--help"], dir.path()).status.code(), Some(0));
}

#[test]
fn gradcheck_prints_a_passing_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = mdn(&["gradcheck", "--mode", "noisyor", "--kernel", "gaussian", "--kf", "5", "--seed", "42"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["passed"], true);
    assert_eq!(report["cases"].as_array().unwrap().len(), 1);
    assert_eq!(report["cases"][0]["kernel"], "gaussian5");
}

#[test]
fn runtime_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = mdn(&["gradcheck", "--kernel", "gaussian", "--kf", "4"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
    let out = mdn(&["train", "--config", "missing.json"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn demo_writes_maps() {
    let dir = tempfile::tempdir().unwrap();
    let out = mdn(&["demo", "--shape", "transfer", "--out", "d"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    for tag in ["c", "ox", "oy", "m"] {
        assert!(dir.path().join(format!("d/transfer_{tag}.pgm")).exists());
        assert!(dir.path().join(format!("d/transfer_{tag}.mdnf")).exists());
    }
}

#[test]
fn train_writes_config_metrics_and_maps() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("tiny.json"),
        r#"{"model": {"channels": 4, "layers": 1, "kernel": 3}, "train": {"heldout": 4, "log_every": 2}}"#,
    )
    .unwrap();
    let out = mdn(&["train", "--config", "tiny.json", "--task", "cross", "--steps", "4", "--out", "t"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let t = dir.path().join("t");
    let metrics = std::fs::read_to_string(t.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 3);
    let cfg: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(t.join("config.json")).unwrap()).unwrap();
    assert_eq!(cfg["task"], "cross");
    assert_eq!(cfg["train"]["steps"], 4);
    assert!(t.join("eval.json").exists());
    assert!(t.join("m_2.pgm").exists());
}

#[test]
fn bench_emits_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = mdn(&["bench", "--sizes", "8", "--iters", "1"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("size,mode,kernel"));
    assert!(lines.count() >= 3);
}
