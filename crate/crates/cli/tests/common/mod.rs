#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

pub fn nopcode() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nopcode"))
}

pub fn run(args: &[&str]) -> Output {
    nopcode().env("RUST_LOG", "warn").args(args).output().expect("spawn nopcode")
}

pub fn run_ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "nopcode {args:?} failed ({:?}):\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 path")
}

/// Non-comment lines of a text artifact.
pub fn data_lines(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path)
        .unwrap_or_else(|e| panic!("{}: {e}", path.display()))
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

/// The document with its `timing` member removed, serialized compactly.
pub fn without_timing(json: &str) -> String {
    let mut v: serde_json::Value = serde_json::from_str(json).expect("report json");
    v.as_object_mut().expect("object").remove("timing");
    serde_json::to_string(&v).unwrap()
}
