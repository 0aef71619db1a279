#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::sync::OnceLock;

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hallglove"))
}

/// Runs the binary in `dir` and returns its output.
pub fn run(dir: &Path, args: &[&str]) -> Output {
    bin()
        .args(args)
        .current_dir(dir)
        .stdin(Stdio::null())
        .output()
        .expect("binary runs")
}

pub fn run_ok(dir: &Path, args: &[&str]) -> Output {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "hallglove {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

/// Dataset and trained model from the shipped defaults, built once per
/// test binary.
pub struct Trained {
    _dir: tempfile::TempDir,
    pub dir: PathBuf,
}

impl Trained {
    pub fn dataset(&self) -> PathBuf {
        self.dir.join("data.csv")
    }

    pub fn weights(&self) -> PathBuf {
        self.dir.join("model.glvw")
    }

    pub fn report(&self) -> serde_json::Value {
        let text = std::fs::read_to_string(self.dir.join("model.report.json")).unwrap();
        serde_json::from_str(&text).unwrap()
    }
}

pub fn trained() -> &'static Trained {
    static T: OnceLock<Trained> = OnceLock::new();
    T.get_or_init(|| {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().to_path_buf();
        run_ok(&dir, &["gen", "--out", "data.csv"]);
        run_ok(&dir, &["train", "data.csv", "--out", "model.glvw"]);
        Trained { _dir: tmp, dir }
    })
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}
