#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

pub const BIN: &str = env!("CARGO_BIN_EXE_evacflow");

/// Six detectors, six regular days and the default evacuation window.
pub const SMALL_SCENARIO: &str = r#"{"regular_hours": 144, "topology": {"nodes": 6, "corridors": 2, "interchange_every": 2}}"#;

pub fn evacflow(args: &[&str], cwd: &Path) -> Output {
    Command::new(BIN)
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

/// Runs and asserts the exit code, returning stdout.
pub fn expect(args: &[&str], cwd: &Path, code: i32) -> String {
    let out = evacflow(args, cwd);
    assert_eq!(
        out.status.code(),
        Some(code),
        "{args:?}\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// Writes the small scenario config and generates `data/` under `dir`.
pub fn small_dataset(dir: &Path) -> PathBuf {
    std::fs::write(dir.join("small.json"), SMALL_SCENARIO).unwrap();
    expect(&["synth", "--config", "small.json", "--out", "data"], dir, 0);
    dir.join("data")
}

/// SHA-256 of every file under `dir`, keyed by relative path.
pub fn hash_dir(dir: &Path) -> Vec<(String, String)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().display().to_string();
                out.push((rel, hex::encode(Sha256::digest(std::fs::read(&p).unwrap()))));
            }
        }
    }
    out.sort();
    out
}

pub fn read(path: impl AsRef<Path>) -> String {
    std::fs::read_to_string(path).unwrap()
}
