use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn mini() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mini")
}

fn rgbt(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rgbt"))
        .arg("--out-dir")
        .arg(out)
        .args(args)
        .env_remove("RGBT_WORKERS")
        .output()
        .unwrap()
}

fn summary(out: &Output) -> Value {
    let stdout = String::from_utf8_lossy(&out.stdout);
    serde_json::from_str(stdout.lines().last().expect("summary line")).unwrap()
}

#[test]
fn version_and_help_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = rgbt(dir.path(), &["--version"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("manifest schema 1"));
    assert!(rgbt(dir.path(), &["stats", "--help"]).status.success());
}

#[test]
fn usage_errors_exit_64() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(rgbt(dir.path(), &["no-such-command"]).status.code(), Some(64));
    assert_eq!(rgbt(dir.path(), &["eval-seg", "--pred"]).status.code(), Some(64));
}

#[test]
fn stochastic_commands_need_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let out = rgbt(dir.path(), &["distill-toy"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(summary(&out)["error"].as_str().unwrap().contains("seed"));
}

#[test]
fn missing_input_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = rgbt(dir.path(), &["validate", "--manifest", "/nonexistent/manifest.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn malformed_config_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[pairing]\nnot_a_key = 3\n").unwrap();
    let out = rgbt(dir.path(), &["--config", cfg.to_str().unwrap(), "stats"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn config_paths_resolve_next_to_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = mini().join("config.toml");
    let out = rgbt(dir.path(), &["--config", cfg.to_str().unwrap(), "validate"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let s = summary(&out);
    assert_eq!(s["command"], "validate");
    assert_eq!(s["result"]["sequences"], 3);
    assert!(dir.path().join("validate.json").is_file());
}

#[test]
fn constant_thermal_frames_are_flagged_not_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = mini().join("config.toml");
    let out = rgbt(dir.path(), &["--config", cfg.to_str().unwrap(), "thermal8"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let s = summary(&out);
    // the mini dataset plants constant frames inside its FFC events
    let degenerate = s["result"]["degenerate"].as_u64().unwrap();
    assert!(degenerate >= 2, "{s}");
    assert_eq!(s["warnings"].as_array().unwrap().len() as u64, degenerate);
    let frame = rgbt_core::io::read_pgm8(dir.path().join("thermal8/park_loop/000.pgm")).unwrap();
    assert!(frame.data().iter().all(|&v| v == 0));
}

#[test]
fn frame_radius_must_match_the_embeddings() {
    let dir = tempfile::tempdir().unwrap();
    let emb = mini().join("embeddings");
    let out = rgbt(
        dir.path(),
        &[
            "eval-vpr",
            "--db",
            emb.join("db_rgb.rgte").to_str().unwrap(),
            "--queries",
            emb.join("queries_thermal.rgte").to_str().unwrap(),
            "--radius",
            "10",
            "--frame-radius",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
}
