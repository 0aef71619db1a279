//! Artifact writing: temp file in the target directory, renamed into place
//! only once fully written, plus the run manifest that sits next to it.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use crate::config::Resolved;

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("cannot write to {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path)
        .with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

/// `model.glvw` -> `model.<ext>`.
pub fn sibling(path: &Path, ext: &str) -> PathBuf {
    path.with_extension(ext)
}

pub fn manifest_path(artifact: &Path) -> PathBuf {
    let mut name = artifact.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    artifact.with_file_name(name)
}

#[derive(Debug, Serialize)]
pub struct RunManifest<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub seed: u64,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub options: serde_json::Value,
    pub config: serde_json::Value,
}

impl<'a> RunManifest<'a> {
    pub fn new(command: &'a str, resolved: &Resolved) -> Self {
        Self {
            tool: "hallglove",
            version: env!("CARGO_PKG_VERSION"),
            command,
            seed: resolved.run.seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
            options: serde_json::Value::Null,
            config: resolved.snapshot(),
        }
    }

    pub fn input(mut self, p: &Path) -> Self {
        self.inputs.push(p.display().to_string());
        self
    }

    pub fn output(mut self, p: &Path) -> Self {
        self.outputs.push(p.display().to_string());
        self
    }

    pub fn options(mut self, v: serde_json::Value) -> Self {
        self.options = v;
        self
    }

    /// Writes the manifest next to `artifact`.
    pub fn write_for(&self, artifact: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        write_atomic(&manifest_path(artifact), text.as_bytes())
    }
}
