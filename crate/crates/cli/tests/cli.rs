use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn spde(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spde"))
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.toml");
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn snapshots(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.starts_with("snapshot_"))
        .collect();
    names.sort();
    names
}

const SMALL: &str = "
[mesh]
nx = 6
ny = 6

[noise]
modes_x = 6
modes_y = 6
";

#[test]
fn unknown_key_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "[mesh]\nnx = 4\nresolution = 3\n");
    let out = spde(tmp.path(), &["--config", &cfg, "config"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("resolution"));
}

#[test]
fn missing_config_file_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let out = spde(tmp.path(), &["--config", "nope.toml", "config"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn invalid_value_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "[run]\nstride = 0\n");
    assert_eq!(spde(tmp.path(), &["--config", &cfg, "run"]).status.code(), Some(2));
    let cfg = write_config(tmp.path(), "[problem]\nshift = -1.0\n");
    assert_eq!(spde(tmp.path(), &["--config", &cfg, "config"]).status.code(), Some(2));
}

#[test]
fn resolved_config_round_trips_byte_for_byte() {
    let tmp = TempDir::new().unwrap();
    let first = spde(tmp.path(), &["config"]);
    assert!(first.status.success());
    let cfg = write_config(tmp.path(), &String::from_utf8(first.stdout.clone()).unwrap());
    let second = spde(tmp.path(), &["--config", &cfg, "config"]);
    assert!(second.status.success());
    assert_eq!(first.stdout, second.stdout);
    assert_eq!(first.stdout, spde(tmp.path(), &["config"]).stdout);
}

#[test]
fn flags_override_the_file() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "[experiment]\nseed = 5\n");
    let out = spde(tmp.path(), &["--config", &cfg, "--seed", "11", "--noise", "additive", "config"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("seed = 11"));
    assert!(text.contains("noise = \"additive\""));
}

#[test]
fn run_writes_one_snapshot_per_stride() {
    let tmp = TempDir::new().unwrap();
    for (steps, stride, expected) in [(0usize, 4usize, 1usize), (10, 4, 3), (12, 4, 4), (5, 1, 6)] {
        let out_dir = tmp.path().join(format!("run_{steps}_{stride}"));
        let cfg = write_config(tmp.path(), &format!("{SMALL}\n[run]\nsteps = {steps}\nstride = {stride}\n"));
        let out = spde(tmp.path(), &["--config", &cfg, "--out", out_dir.to_str().unwrap(), "run"]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        assert_eq!(snapshots(&out_dir).len(), expected, "steps {steps}, stride {stride}");
        assert!(out_dir.join("mesh.txt").exists());
        assert!(out_dir.join("resolved_config.toml").exists());
        let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out_dir.join("run_summary.json")).unwrap()).unwrap();
        assert_eq!(summary["snapshots"].as_array().unwrap().len(), expected);
    }
}

#[test]
fn same_seed_reproduces_the_path() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &format!("{SMALL}\n[run]\nsteps = 8\nstride = 4\n"));
    let run = |name: &str, seed: &str| {
        let dir = tmp.path().join(name);
        assert!(spde(tmp.path(), &["--config", &cfg, "--seed", seed, "--out", dir.to_str().unwrap(), "run"]).status.success());
        fs::read(dir.join("snapshot_000008.csv")).unwrap()
    };
    let a = run("a", "7");
    assert_eq!(a, run("b", "7"));
    assert_ne!(a, run("c", "8"));
}

#[test]
fn darcy_writes_fields_and_report() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let out = spde(tmp.path(), &["--config", &cfg, "darcy"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = tmp.path().join("out");
    for name in ["pressure.csv", "velocity.csv", "darcy_report.json", "resolved_config.toml"] {
        assert!(dir.join(name).exists(), "{name}");
    }
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("darcy_report.json")).unwrap()).unwrap();
    // Constant permeability 0.1 with unit pressure drop over unit length.
    assert!((report["max_speed"].as_f64().unwrap() - 0.1).abs() < 1e-8);
    assert!(report["pressure_min"].as_f64().unwrap() >= -1e-12);
    assert!(report["pressure_max"].as_f64().unwrap() <= 1.0 + 1e-12);
}

#[test]
fn heat_check_passes_with_defaults() {
    let tmp = TempDir::new().unwrap();
    let out = spde(tmp.path(), &["heat-check"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("out/heat_report.json")).unwrap()).unwrap();
    assert_eq!(report["pass"], serde_json::Value::Bool(true));
}

#[test]
fn converge_reports_and_enforces_the_band() {
    let tmp = TempDir::new().unwrap();
    let base = format!("{SMALL}\n[experiment]\nreference_steps = 64\nlevel_steps = [4, 8, 16]\nrealizations = 8\n");

    let cfg = write_config(tmp.path(), &format!("{base}additive_band = [-100.0, 100.0]\n"));
    let out = spde(tmp.path(), &["--config", &cfg, "--noise", "additive", "--out", "wide", "converge"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(tmp.path().join("wide/convergence_additive.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("wide/convergence_additive.json")).unwrap()).unwrap();
    assert!(json.to_string().contains("realizations"));

    let cfg = write_config(tmp.path(), &format!("{base}additive_band = [50.0, 60.0]\n"));
    let out = spde(tmp.path(), &["--config", &cfg, "--noise", "additive", "--out", "narrow", "converge"]);
    assert_eq!(out.status.code(), Some(4));
    assert!(tmp.path().join("narrow/convergence_additive.csv").exists());
}
