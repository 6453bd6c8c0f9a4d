//! Run manifests: enough provenance to re-run any command.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::{IoError, Result};
use crate::volume_file::write_atomic;

pub const MANIFEST_FILE: &str = "run.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    /// Subcommand name plus its fully resolved configuration.
    pub command: String,
    pub config: serde_json::Value,
    pub seed: u64,
    pub started_unix: u64,
    pub finished_unix: u64,
    /// Paths of everything the run wrote, relative to the run directory.
    pub artifacts: Vec<String>,
    pub tool_version: String,
}

pub fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value, seed: u64) -> Self {
        RunManifest {
            command: command.to_string(),
            config,
            seed,
            started_unix: unix_now(),
            finished_unix: 0,
            artifacts: Vec::new(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    pub fn add_artifact(&mut self, path: &Path, run_dir: &Path) {
        let rel = path.strip_prefix(run_dir).unwrap_or(path);
        self.artifacts.push(rel.display().to_string());
    }

    /// Write `run.json` into the run directory; exactly one manifest per
    /// directory, so an existing one is an error.
    pub fn finish(mut self, run_dir: &Path) -> Result<PathBuf> {
        let path = run_dir.join(MANIFEST_FILE);
        if path.exists() {
            return Err(IoError::Format(format!(
                "{} already contains a run manifest; use a fresh output directory",
                run_dir.display()
            )));
        }
        self.finished_unix = unix_now();
        write_atomic(&path, serde_json::to_string_pretty(&self)?.as_bytes())?;
        Ok(path)
    }
}

pub fn load_manifest(run_dir: &Path) -> Result<RunManifest> {
    let bytes = std::fs::read(run_dir.join(MANIFEST_FILE))?;
    Ok(serde_json::from_slice(&bytes)?)
}
