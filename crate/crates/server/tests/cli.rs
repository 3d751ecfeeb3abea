mod common;

use std::process::Command;

use common::repo;

const SERVER: &str = env!("CARGO_BIN_EXE_teleop-server");
const EVAL: &str = env!("CARGO_BIN_EXE_teleop-eval");

#[test]
fn synth_then_detect_writes_a_mesh() {
    let dir = tempfile::tempdir().unwrap();
    let cloud = dir.path().join("t.cloud");
    let mesh = dir.path().join("t.mesh.toml");
    let s = Command::new(SERVER).args(["synth-cloud", "--out"]).arg(&cloud).args(["--points", "5000", "--seed", "3"]).status().unwrap();
    assert!(s.success());
    let s = Command::new(SERVER).args(["detect", "--cloud"]).arg(&cloud).arg("--out").arg(&mesh).status().unwrap();
    assert!(s.success());
    let m = teleop_server::formats::load_mesh(&mesh).unwrap();
    assert!(m.plane.normal.z.abs() > 0.999);
    assert!(m.boundary.len() >= 3);
}

#[test]
fn missing_inputs_exit_nonzero() {
    let out = Command::new(SERVER).args(["detect", "--cloud", "/nonexistent.cloud", "--out", "/tmp/x.toml"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = Command::new(SERVER).args(["--scene", "/nonexistent.toml", "--port", "0"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = Command::new(SERVER).args(["replay", "--log", "/nonexistent.ndjson"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn eval_on_an_empty_directory_writes_an_empty_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.csv");
    let s = Command::new(EVAL).arg("--fixtures").arg(dir.path()).arg("--out").arg(&out).status().unwrap();
    assert!(s.success());
    assert_eq!(std::fs::read_to_string(&out).unwrap().lines().count(), 1);
}

#[test]
fn eval_reports_each_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.csv");
    let o = Command::new(EVAL).arg("--fixtures").arg(repo("fixtures/negative")).args(["--mode", "ee", "--out"]).arg(&out).output().unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("failure"), "{stdout}");
    let table = std::fs::read_to_string(&out).unwrap();
    assert!(table.lines().nth(1).unwrap().starts_with("Task1,EE,1,0.0,"), "{table}");
}
