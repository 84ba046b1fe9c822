//! Run manifests and file output helpers.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;

pub const MANIFEST_VERSION: u32 = 1;

/// Everything needed to rerun a command. Wall-clock timings are kept out of
/// the manifest so that reruns produce identical bytes; they go to
/// `timings.log` next to it.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub manifest_version: u32,
    pub command: String,
    pub library_version: String,
    pub seed: u64,
    pub config: Value,
    pub artifacts: Vec<String>,
    pub results: Value,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64, config: &impl Serialize) -> Result<Self> {
        Ok(Self {
            manifest_version: MANIFEST_VERSION,
            command: command.to_string(),
            library_version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            config: serde_json::to_value(config)?,
            artifacts: Vec::new(),
            results: Value::Null,
        })
    }
}

/// Collects outputs under one directory and records their names.
pub struct OutputDir {
    root: PathBuf,
    artifacts: Vec<String>,
    timings: Vec<(String, Duration)>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(Self {
            root: root.to_path_buf(),
            artifacts: Vec::new(),
            timings: Vec::new(),
        })
    }

    pub fn path(&mut self, name: &str) -> PathBuf {
        self.artifacts.push(name.to_string());
        self.root.join(name)
    }

    pub fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        let path = self.path(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
    }

    pub fn write_json(&mut self, name: &str, value: &impl Serialize) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text)
    }

    pub fn time(&mut self, label: &str, elapsed: Duration) {
        self.timings.push((label.to_string(), elapsed));
    }

    /// Writes `manifest.json` and `timings.log`.
    pub fn finish(self, manifest: RunManifest, threads: usize) -> Result<()> {
        self.finish_with_prefix(manifest, threads, "")
    }

    /// Like [`finish`](Self::finish) with both file names prefixed.
    pub fn finish_with_prefix(mut self, mut manifest: RunManifest, threads: usize, prefix: &str) -> Result<()> {
        manifest.artifacts = std::mem::take(&mut self.artifacts);
        manifest.artifacts.sort();
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        let path = self.root.join(format!("{prefix}manifest.json"));
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        let mut log = format!("threads {threads}\n");
        for (label, d) in &self.timings {
            writeln!(log, "{label} {:.3}s", d.as_secs_f64())?;
        }
        let path = self.root.join(format!("{prefix}timings.log"));
        fs::write(&path, log).with_context(|| format!("writing {}", path.display()))
    }
}

/// Formats an optional metric for CSV; undefined values are left empty.
pub fn csv_value(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}
