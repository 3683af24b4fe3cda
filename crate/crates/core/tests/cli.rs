//! The `prompt` binary: exit codes and flag handling.

use std::process::Command;

use prompt_core::harness::ExperimentConfig;

fn prompt() -> Command {
    Command::new(env!("CARGO_BIN_EXE_prompt"))
}

#[test]
fn missing_config_exits_2_and_names_the_path() {
    let out = prompt()
        .args(["collect", "--config", "/definitely/not/here.json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("/definitely/not/here.json"), "{err}");
}

#[test]
fn invalid_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, r#"{"evaluation": {"holdout_be": ["stream"]}}"#).unwrap();
    let out = prompt().args(["collect", "--config"]).arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    std::fs::write(&path, "{ not json").unwrap();
    let out = prompt().args(["collect", "--config"]).arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn stage_failure_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::tiny();
    // the output root is a regular file, so no stage can create its directory
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "").unwrap();
    cfg.output_dir = blocker.join("out");
    let path = dir.path().join("cfg.json");
    std::fs::write(&path, cfg.to_json().unwrap()).unwrap();
    let out = prompt().args(["collect", "--config"]).arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn tiny_run_with_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.json");
    std::fs::write(&path, ExperimentConfig::tiny().to_json().unwrap()).unwrap();
    let out_dir = dir.path().join("run");
    let out = prompt()
        .args(["compare", "--seed", "3", "--config"])
        .arg(&path)
        .arg("--out")
        .arg(&out_dir)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("prompt") && stdout.contains("clite-plus"), "{stdout}");
    assert!(out_dir.join("compare/buckets.csv").exists());
    let again = prompt()
        .args(["compare", "--seed", "3", "--config"])
        .arg(&path)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(String::from_utf8_lossy(&again.stdout).contains("up to date"));
}
