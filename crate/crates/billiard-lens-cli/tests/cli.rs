use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use billiard_lens_cli::{Cli, THREADS_ENV};
use clap::Parser;
use serde_json::Value;

fn bin(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_billiard-lens"))
        .arg("--out")
        .arg(out)
        .args(args)
        .env_remove(THREADS_ENV)
        .output()
        .expect("binary runs")
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).expect("stdout is a JSON report")
}

fn stderr_json(o: &Output) -> Value {
    let text = String::from_utf8_lossy(&o.stderr);
    let line = text.lines().find(|l| l.starts_with('{')).expect("error report on stderr");
    serde_json::from_str(line).unwrap()
}

#[test]
fn torus_angles_have_genus_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin(&["genus", "--angles", "1/2,1/2,1/2,1/2"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let r = stdout_json(&o);
    assert_eq!(r["genus"], 1);
    assert_eq!(r["seed"], 1);
    let file: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("genus.json")).unwrap()).unwrap();
    assert_eq!(file, r);
}

#[test]
fn equilateral_angles_have_genus_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin(&["genus", "--angles", "1/3,1/3,1/3"], dir.path());
    assert_eq!(stdout_json(&o)["genus"], 1);
}

#[test]
fn empty_config_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("empty.json");
    fs::write(&cfg, "{}").unwrap();
    let o = bin(&["--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_json(&o)["status"], "error");
}

#[test]
fn no_command_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin(&[], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_json(&o)["reason"], "invalid-config");
}

#[test]
fn invalid_values_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["genus", "--angles", "1/0"][..],
        &["kernel", "--R", "-1"],
        &["localize", "--bc", "sticky", "--mus", "5"],
        &["robin-freqs", "--sigmas", "-0.5"],
    ] {
        let o = bin(args, dir.path());
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert!(stderr_json(&o)["reason"].is_string());
    }
}

#[test]
fn unknown_config_fields_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"command": "genus", "params": {"angles": ["1/2"], "colour": 3}}"#).unwrap();
    let o = bin(&["--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn violated_tolerance_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin(&["robin-freqs", "--sigmas", "0.5", "--n-max", "5", "--tolerance", "1e-300"], dir.path());
    assert_eq!(o.status.code(), Some(3));
    let r = stdout_json(&o);
    assert_eq!(r["status"], "numeric-contract");
    assert!(!r["violations"].as_array().unwrap().is_empty());
}

#[test]
fn kernel_example_writes_csv_and_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin(&["kernel", "--mus", "5,65,1105,32045", "--R", "4"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let r = stdout_json(&o);
    assert_eq!(r["strictly_decreasing"], true);
    let csv = fs::read_to_string(dir.path().join("kernel.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "mu,shell_size,sup_error");
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("5,8,0.16421679555"));
}

#[test]
fn config_file_and_flags_merge() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("shell.json");
    let out = dir.path().join("from-config");
    let text = serde_json::json!({
        "command": "shell",
        "params": {"form": [1, 1], "mus": [5]},
        "out": out,
        "seed": 9,
        "threads": 1
    });
    fs::write(&cfg, text.to_string()).unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_billiard-lens"))
        .args(["--config", cfg.to_str().unwrap(), "shell", "--mus", "25,65"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = stdout_json(&o);
    assert_eq!(r["seed"], 9);
    let counts: Vec<u64> = r["shells"].as_array().unwrap().iter().map(|s| s["count"].as_u64().unwrap()).collect();
    assert_eq!(counts, [12, 16]);
    assert!(out.join("shell.json").exists());
    assert!(out.join("shell_points.csv").exists());
}

#[test]
fn mismatched_config_command_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"command": "genus", "params": {"angles": ["1/2"]}}"#).unwrap();
    let o = bin(&["--config", cfg.to_str().unwrap(), "shell"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn thread_count_precedence() {
    let parse = |args: &[&str]| Cli::try_parse_from(["billiard-lens"].iter().chain(args)).unwrap();
    assert_eq!(parse(&["--threads", "3", "genus"]).resolve(Some("5".into())).unwrap().threads, 3);
    assert_eq!(parse(&["genus"]).resolve(Some("5".into())).unwrap().threads, 5);
    assert!(parse(&["genus"]).resolve(None).unwrap().threads >= 1);
    assert!(parse(&["--threads", "0", "genus"]).resolve(None).is_err());
    assert!(parse(&["genus"]).resolve(Some("many".into())).is_err());
}

#[test]
fn seed_changes_randomized_reports_only_through_the_seed() {
    let dir = tempfile::tempdir().unwrap();
    let a = stdout_json(&bin(&["--seed", "4", "obstruct-rect", "--count", "5"], dir.path()));
    let b = stdout_json(&bin(&["--seed", "4", "obstruct-rect", "--count", "5"], dir.path()));
    let c = stdout_json(&bin(&["--seed", "5", "obstruct-rect", "--count", "5"], dir.path()));
    assert_eq!(a, b);
    assert_ne!(a["wave_min"], c["wave_min"]);
    assert_eq!(c["seed"], 5);
}
