use std::path::Path;
use std::process::{Command, Output};

fn ampa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ampa")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("config.json");
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect()
}

#[test]
fn se_run_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let res = ampa(&["se-run", "--out", out.to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["result"]["classification"], "converged_to_one");
    let rows = csv_rows(&out.join("se_trajectory.csv"));
    assert_eq!(rows.len() as u64, summary["result"]["iterations"].as_u64().unwrap() + 1);
    let last: f64 = rows.last().unwrap()[3].parse().unwrap();
    assert!(last < 1e-9);
    assert!(out.join("se_trajectory.schema.json").exists());
    assert!(summary["version"].as_str().unwrap().starts_with('v'));
}

#[test]
fn se_run_below_two_stays_away_from_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"schema_version":1,"master_seed":0,"command":"se-run","params":{"delta":2.0}}"#);
    let out = dir.path().join("o");
    assert!(ampa(&["se-run", "--config", &cfg, "--out", out.to_str().unwrap()]).status.success());
    let rows = csv_rows(&out.join("se_trajectory.csv"));
    let last: f64 = rows.last().unwrap()[3].parse().unwrap();
    assert!(last > 1e-3, "{last}");
}

#[test]
fn bad_config_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = dir.path().join("o");
    let o = o.to_str().unwrap();
    let cfg = write_config(dir.path(), r#"{"schema_version":1,"master_seed":0,"command":"se-run","params":{"alpha0":0.0,"sigma2_0":0.0}}"#);
    assert_eq!(ampa(&["se-run", "--config", &cfg, "--out", o]).status.code(), Some(2));
    let cfg = write_config(dir.path(), r#"{"schema_version":1,"master_seed":0,"command":"basin","params":{}}"#);
    assert_eq!(ampa(&["se-run", "--config", &cfg, "--out", o]).status.code(), Some(2));
    assert_eq!(ampa(&["se-run", "--config", "/nonexistent.json", "--out", o]).status.code(), Some(2));
    assert_eq!(ampa(&["no-such-command"]).status.code(), Some(2));
}

#[test]
fn sim_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"schema_version":1,"master_seed":0,"command":"sim",
            "params":{"n":150,"trials":2,"solver":{"max_iter":10}}}"#,
    );
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for (out, threads) in [(&a, "1"), (&b, "2")] {
        let res = ampa(&["sim", "--config", &cfg, "--seed", "3", "--threads", threads, "--out", out.to_str().unwrap()]);
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    }
    for f in ["trials.csv", "sim_means.csv", "trials.schema.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(a.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["config"]["master_seed"], 3);
}

#[test]
fn json_format() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let cfg = write_config(
        dir.path(),
        r#"{"schema_version":1,"master_seed":0,"command":"spectral-predict","params":{"deltas":[4.0]}}"#,
    );
    let res = ampa(&["spectral-predict", "--config", &cfg, "--format", "json", "--out", out.to_str().unwrap()]);
    assert!(res.status.success());
    let rows: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("spectral_predict.json")).unwrap()).unwrap();
    let a2: f64 = rows[0]["alpha0_sq"].as_str().unwrap().parse().unwrap();
    assert!((a2 - 0.6023).abs() < 1e-4);
}

#[test]
fn print_config_roundtrips() {
    let res = ampa(&["noise-curve", "--print-config", "--seed", "9"]);
    assert!(res.status.success());
    let v: serde_json::Value = serde_json::from_slice(&res.stdout).unwrap();
    assert_eq!(v["command"], "noise-curve");
    assert_eq!(v["master_seed"], 9);
    assert_eq!(v["params"]["snr_db"].as_array().unwrap().len(), 6);
}
