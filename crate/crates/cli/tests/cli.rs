use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use sha2::{Digest, Sha256};

fn treewalk(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_treewalk"))
        .args(args)
        .env("TREEWALK_OUT", out)
        .output()
        .expect("binary runs")
}

fn manifest(out: &Path, command: &str) -> Value {
    let text = std::fs::read_to_string(out.join(format!("manifest-{command}.json"))).expect("manifest written");
    serde_json::from_str(&text).unwrap()
}

#[test]
fn manifest_hashes_match_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = treewalk(&["oracle", "--instances", "12", "--depth", "5", "--seed", "3"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let m = manifest(dir.path(), "oracle");
    assert_eq!(m["status"], "ok");
    assert_eq!(m["seed"], 3);
    let artifacts = m["artifacts"].as_array().unwrap();
    assert!(!artifacts.is_empty());
    for a in artifacts {
        let bytes = std::fs::read(dir.path().join(a["file"].as_str().unwrap())).unwrap();
        assert_eq!(a["bytes"], bytes.len());
        assert_eq!(a["sha256"], hex::encode(Sha256::digest(&bytes)));
    }
}

#[test]
fn thread_count_does_not_change_artifacts() {
    let one = tempfile::tempdir().unwrap();
    let many = tempfile::tempdir().unwrap();
    let args = ["simulate", "--n", "400,900", "--replicas", "3", "--seed", "11"];
    let a = treewalk(&[&args[..], &["--threads", "1"]].concat(), one.path());
    let b = treewalk(&[&args[..], &["--threads", "4"]].concat(), many.path());
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(b.status.code(), Some(0));
    for file in ["simulate-slices.csv", "simulate-range.csv", "manifest-simulate.json"] {
        assert_eq!(std::fs::read(one.path().join(file)).unwrap(), std::fs::read(many.path().join(file)).unwrap(), "{file}");
    }
}

#[test]
fn config_errors_carry_location_and_still_write_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[law]\nfamily = \"two-point\"\nq = 0.5\n\n[experiment]\nreplicaz = 4\n").unwrap();
    let out = treewalk(&["--config", cfg.to_str().unwrap(), "assumptions"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("bad.toml:6:"), "{stderr}");
    assert!(stderr.contains("replicaz"), "{stderr}");
    let m = manifest(dir.path(), "assumptions");
    assert_eq!(m["status"], "error");
    assert!(m["reason"].as_str().unwrap().contains("replicaz"));
}

#[test]
fn semantic_config_errors_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("law.toml");
    std::fs::write(&cfg, "[law]\nfamily = \"two-point\"\nq = 1.5\na = -0.1\nm = 3\nb = 1.2\n").unwrap();
    let out = treewalk(&["--config", cfg.to_str().unwrap(), "constants"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("law.toml:3:"), "{stderr}");
}

#[test]
fn failed_checks_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = treewalk(&["assumptions", "--k", "4"], dir.path());
    assert_eq!(out.status.code(), Some(3));
    let m = manifest(dir.path(), "assumptions");
    assert_eq!(m["status"], "check-failed");
    let report: Value = serde_json::from_slice(&std::fs::read(dir.path().join("assumptions.json")).unwrap()).unwrap();
    assert_eq!(report["all_passed"], false);
}

#[test]
fn unknown_theorem_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = treewalk(&["verify", "genth9", "--n", "400"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(manifest(dir.path(), "verify-genth9")["status"], "error");
}

#[test]
fn out_flag_overrides_environment() {
    let env_dir = tempfile::tempdir().unwrap();
    let flag_dir = tempfile::tempdir().unwrap();
    let out = treewalk(&["assumptions", "--out", flag_dir.path().to_str().unwrap()], env_dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert!(flag_dir.path().join("manifest-assumptions.json").exists());
    assert!(!env_dir.path().join("manifest-assumptions.json").exists());
}
