//! Runs the built binary against small configs in temporary directories.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

pub fn nsdecode(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nsdecode")).args(args).output().expect("binary runs")
}

pub fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Writes a small experiment config into `dir` and returns its path.
pub fn small_config(dir: &Path, seed: u64, extra: &str) -> PathBuf {
    let path = dir.join("experiment.toml");
    let text = format!(
        r#"seed = {seed}
schemes = ["BL", "HC"]
scenarios = ["IntraSession"]
{extra}

[paths]
manifest = "data/manifest.json"
output = "out"

[synth]
n_subjects = 1
n_sessions = 1
n_trials = 3
"#
    );
    std::fs::write(&path, text).unwrap();
    path
}

/// SHA-256 of every file below `dir`, keyed by relative path.
pub fn tree_digest(dir: &Path) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                let digest = Sha256::digest(std::fs::read(&p).unwrap());
                out.insert(rel, digest.iter().map(|b| format!("{b:02x}")).collect());
            }
        }
    }
    out
}

/// synth → preprocess → train → eval, each with `--deterministic`.
pub fn full_pipeline(config: &Path) -> Result<(), String> {
    let c = config.to_str().unwrap();
    let steps: [&[&str]; 4] = [
        &["synth"],
        &["preprocess"],
        &["train", "--scheme", "HC"],
        &["eval"],
    ];
    for step in steps {
        let mut args = vec!["--deterministic", "--config", c];
        args.extend_from_slice(step);
        let o = nsdecode(&args);
        if !o.status.success() {
            return Err(format!("{step:?} exited {:?}: {}", o.status.code(), stderr(&o)));
        }
    }
    Ok(())
}
