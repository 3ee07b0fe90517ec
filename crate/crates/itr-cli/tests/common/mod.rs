#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_itr"))
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

pub fn code(out: &Output) -> i32 {
    out.status.code().expect("process was killed by a signal")
}

/// Asserts success and parses standard output as JSON.
pub fn ok_json(out: &Output) -> serde_json::Value {
    assert!(
        out.status.success(),
        "command failed (code {:?}): {}",
        out.status.code(),
        stderr(out)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is not JSON")
}

pub fn read_json_file(path: &Path) -> serde_json::Value {
    let text = std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{path:?}: {e}"));
    serde_json::from_str(&text).unwrap_or_else(|e| panic!("{path:?}: {e}"))
}

/// Generates a small synthetic study into `dir`; returns the source and
/// target CSV paths.
pub fn small_study(dir: &Path, seed: u64) -> (PathBuf, PathBuf) {
    std::fs::create_dir_all(dir).unwrap();
    let config = dir.join("sim.json");
    std::fs::write(
        &config,
        format!(r#"{{"n_general": 3000, "n_target": 600, "seed": {seed}}}"#),
    )
    .unwrap();
    let out = bin()
        .arg("simulate")
        .arg("--out")
        .arg(dir)
        .arg("--config")
        .arg(&config)
        .output()
        .unwrap();
    assert!(out.status.success(), "simulate failed: {}", stderr(&out));
    (dir.join("source.csv"), dir.join("target.csv"))
}

/// A search configuration small enough for tests but large enough to land
/// near the optimum on the small study.
pub fn tiny_ga_config(dir: &Path, seed: u64) -> PathBuf {
    let path = dir.join("tiny.json");
    std::fs::write(
        &path,
        format!(
            r#"{{"ga": {{"population_size": 40, "generations": 25, "restarts": 2, "seed": {seed}}}}}"#
        ),
    )
    .unwrap();
    path
}

pub fn f64_at<'a>(value: &'a serde_json::Value, pointer: &str) -> f64 {
    value
        .pointer(pointer)
        .and_then(|v| v.as_f64())
        .unwrap_or_else(|| panic!("no number at {pointer} in {value}"))
}
