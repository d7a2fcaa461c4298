use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use snse_core::harness::RunConfig;
use snse_core::spectral::{FieldSnapshot, ModeLattice, SpectralField};

fn snse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_snse")).args(args).output().expect("binary runs")
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn default_config_round_trips() {
    let out = snse(&["default-config"]);
    assert!(out.status.success());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("config.toml");
    fs::write(&path, &out.stdout).unwrap();
    let loaded = RunConfig::load(&path).unwrap();
    assert_eq!(loaded.resolved().unwrap(), RunConfig::default().resolved().unwrap());
}

#[test]
fn run_then_replay_and_verify() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.toml");
    let cfg = RunConfig { horizon: 0.1, paths: 3, ..RunConfig::default() };
    fs::write(&config, cfg.to_toml_string()).unwrap();
    let records = dir.path().join("records.jsonl");

    let out = snse(&["run", "--config", arg(&config), "--out", arg(&records), "--workers", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&records).unwrap();
    assert_eq!(text.lines().count(), 4, "header plus one line per path");

    let out = snse(&["replay", "--record", arg(&records)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let out = snse(&["replay", "--record", arg(&records), "--path-id", "1"]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stdout).lines().count(), 1);

    // three paths are too few for the bounds, so only the report is checked
    let report = dir.path().join("report.json");
    snse(&["verify", "--records", arg(&records), "--report", arg(&report)]);
    let parsed: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert!(parsed.get("overall").is_some());
}

#[test]
fn decompose_writes_pieces_and_manifest() {
    let lat = ModeLattice::new(16).unwrap();
    let mut u = SpectralField::zeros(&lat);
    let z = num_complex::Complex64::new(0.0, 0.0);
    let a = num_complex::Complex64::new(0.01, 0.0);
    u.set_mode([1, 0, 0], [z, a, z]).unwrap();
    u.set_mode([0, 0, 5], [a, z, z]).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("u0.json");
    fs::write(&input, FieldSnapshot::from_field(&u, 0.25).to_json()).unwrap();
    let out_dir = dir.path().join("pieces");

    let out = snse(&["decompose", "--in", arg(&input), "--eps0", "0.1", "--out", arg(&out_dir)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
    let pieces = manifest["pieces"].as_array().unwrap();
    assert!(!pieces.is_empty());
    for p in pieces {
        assert!(out_dir.join(p.as_str().unwrap()).exists());
    }
}

#[test]
fn missing_input_fails() {
    let out = snse(&["decompose", "--in", "/nonexistent/u0.json", "--eps0", "0.1", "--out", "/tmp/none"]);
    assert!(!out.status.success());
}
