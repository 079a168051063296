use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn sidlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sidlab"))
        .args(args)
        .env_remove("SIDLAB_WORKERS")
        .output()
        .unwrap()
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn csvs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

#[test]
fn validate_reports_the_step_estimate() {
    let out = sidlab(&["validate", config("kramers.toml").to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("valid kramers experiment"), "{text}");
}

#[test]
fn every_shipped_config_validates() {
    for entry in std::fs::read_dir(config("")).unwrap() {
        let path = entry.unwrap().path();
        let out = sidlab(&["validate", path.to_str().unwrap()]);
        assert!(out.status.success(), "{}: {}", path.display(), String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn run_writes_outputs_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("flow");
    let out = sidlab(&["run", config("flow_check.toml").to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("PASS"), "{stdout}");
    for f in ["flow.csv", "frozen_flow.csv", "flow.json", "report.txt", "manifest.json", "config.resolved.toml"] {
        assert!(out_dir.join(f).exists(), "{f} missing");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["experiment"], "flow_check");
}

#[test]
fn worker_count_does_not_change_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("stabilisation.toml");
    let mut runs = Vec::new();
    for workers in ["1", "2"] {
        let out_dir = dir.path().join(workers);
        let out = sidlab(&["run", cfg.to_str().unwrap(), "--workers", workers, "--out", out_dir.to_str().unwrap()]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        runs.push(csvs(&out_dir));
    }
    assert!(!runs[0].is_empty());
    assert_eq!(runs[0], runs[1]);
}

#[test]
fn over_budget_config_exits_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(config("kramers.toml")).unwrap();
    let path = dir.path().join("tight.toml");
    std::fs::write(&path, format!("step_budget = 1000.0\n{text}")).unwrap();
    let out = sidlab(&["validate", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn unknown_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(config("flow_check.toml")).unwrap();
    let path = dir.path().join("typo.toml");
    std::fs::write(&path, format!("t_ned = 3.0\n{text}")).unwrap();
    let out = sidlab(&["run", path.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("t_ned"));
}
