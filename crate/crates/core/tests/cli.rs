use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::process::Command;

use nlneumann::cli_io::{parse_config, run, RunStatus};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nlneumann"))
}

fn run_cli(dir: &Path, command: &str, json: &str) -> (i32, String) {
    let cfg = dir.join("config.json");
    fs::write(&cfg, json).unwrap();
    let out = bin()
        .args([command, "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn listed_files_match(dir: &Path, files: &[String]) {
    let on_disk: BTreeSet<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    let listed: BTreeSet<String> = files.iter().cloned().collect();
    assert_eq!(on_disk, listed);
}

#[test]
fn verify_with_defaults_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = parse_config(r#"{"command":"verify"}"#).unwrap();
    let m = run(&cfg, tmp.path()).unwrap();
    assert_eq!(m.status, RunStatus::Pass);
    assert!(m.invariants.iter().any(|i| i.name.starts_with("divergence")));
    assert!(m.invariants.iter().any(|i| i.name.starts_with("integration by parts")));
    listed_files_match(tmp.path(), &m.files);
}

#[test]
fn eigen_csv_has_zero_row_and_dense_match() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = parse_config(r#"{"command":"eigen","p":2,"s":0.5,"n_interior":32,"n_seeds":2}"#).unwrap();
    let m = run(&cfg, tmp.path()).unwrap();
    assert_eq!(m.status, RunStatus::Pass, "{:?}", m.invariants);
    let text = fs::read_to_string(tmp.path().join("eigen.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "seed_id,lambda,residual,sign_changes,linf_int,linf_ext");
    let first: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(first[0], "0");
    assert_eq!(first[1].parse::<f64>().unwrap(), 0.0);
    assert!(m.invariants.iter().any(|i| i.name.contains("dense") && i.pass));
    listed_files_match(tmp.path(), &m.files);
}

#[test]
fn heat_with_constant_data_is_stationary() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = parse_config(r#"{"command":"heat","profile":{"constant":{"value":0.5}},"steps":4,"tau":0.1}"#).unwrap();
    let m = run(&cfg, tmp.path()).unwrap();
    assert_eq!(m.status, RunStatus::Pass);
    let mut rdr = csv::Reader::from_path(tmp.path().join("heat.csv")).unwrap();
    assert_eq!(rdr.headers().unwrap(), vec!["t", "mass", "energy"]);
    let rows: Vec<Vec<f64>> = rdr
        .records()
        .map(|r| r.unwrap().iter().map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 5);
    for r in &rows {
        assert_eq!(r[1], rows[0][1]);
        assert_eq!(r[2], 0.0);
    }
    listed_files_match(tmp.path(), &m.files);
}

#[test]
fn poisson_and_mountainpass_runs_pass() {
    for json in [
        r#"{"command":"poisson","p":3,"source":{"constant":{"value":4}}}"#,
        r#"{"command":"poisson","source":{"table":{"x":[0,1],"f":[1,3]}}}"#,
        r#"{"command":"mountainpass","nonlinearity_r":3.5,"sign":"minus","n_seeds":2}"#,
    ] {
        let tmp = tempfile::tempdir().unwrap();
        let m = run(&parse_config(json).unwrap(), tmp.path()).unwrap();
        assert_eq!(m.status, RunStatus::Pass, "{json}: {:?}", m.invariants);
        listed_files_match(tmp.path(), &m.files);
    }
}

#[test]
fn identical_configs_give_identical_csv() {
    let json = r#"{"command":"eigen","p":1.7,"s":0.4,"n_interior":12,"n_seeds":2,"seed":9,"threads":2}"#;
    let cfg = parse_config(json).unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run(&cfg, a.path()).unwrap();
    run(&cfg, b.path()).unwrap();
    for f in ["eigen.csv", "eigenfunction.csv"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn binary_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let (code, err) = run_cli(tmp.path(), "eigen", r#"{"command":"eigen","s":1.5}"#);
    assert_eq!(code, 2);
    assert!(err.contains("(0,1)"), "{err}");
    let (code, err) = run_cli(tmp.path(), "eigen", r#"{"command":"fly"}"#);
    assert_eq!(code, 2);
    assert!(err.contains("fly"), "{err}");
    let (code, _) = run_cli(tmp.path(), "heat", r#"{"command":"eigen"}"#);
    assert_eq!(code, 2);
    let (code, _) = run_cli(tmp.path(), "heat", r#"{"unknown_key":1}"#);
    assert_eq!(code, 2);
    let (code, err) = run_cli(tmp.path(), "heat", r#"{"profile":"step","steps":3}"#);
    assert_eq!(code, 0, "{err}");
    assert!(tmp.path().join("out/manifest.json").exists());
    assert!(tmp.path().join("out/snapshot_00003.csv").exists());
}
