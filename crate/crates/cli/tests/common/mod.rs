#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

pub fn clv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_clv"))
        .args(args)
        .env("LOG_LEVEL", "error")
        .output()
        .expect("clv binary runs")
}

/// Runs `clv` and panics with its stderr unless it exits 0.
pub fn clv_ok(args: &[&str]) -> Output {
    let out = clv(args);
    assert!(
        out.status.success(),
        "clv {args:?} exited {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 path")
}

/// Header plus rows of a small CSV file, split on commas.
pub fn read_table(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(path).expect("readable csv");
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("").split(',').map(str::to_string).collect();
    let rows = lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
    (header, rows)
}

/// One numeric column by name.
pub fn column(path: &Path, name: &str) -> Vec<f64> {
    let (header, rows) = read_table(path);
    let i = header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"));
    rows.iter().map(|r| r[i].parse().expect("number")).collect()
}

pub fn write_spec(path: &Path, json: &str) {
    std::fs::write(path, json).expect("spec written");
}
