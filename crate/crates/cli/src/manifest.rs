use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Provenance record written next to every run's outputs.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    /// Seconds since the Unix epoch.
    pub started: u64,
    pub finished: u64,
    pub outputs: Vec<PathBuf>,
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

impl RunManifest {
    pub fn start(command: &str, config_hash: String, seed: u64) -> Self {
        Self {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config_hash,
            seed,
            started: now(),
            finished: 0,
            outputs: Vec::new(),
        }
    }

    pub fn output(&mut self, path: &Path) -> PathBuf {
        self.outputs.push(path.to_path_buf());
        path.to_path_buf()
    }

    pub fn finish(mut self, dir: &Path) -> Result<()> {
        self.finished = now();
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(&self)?;
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }
}

/// `explicit`, else `$CTR_OUT_ROOT/<command>`, else `runs/<command>`.
pub fn out_dir(explicit: Option<PathBuf>, command: &str) -> Result<PathBuf> {
    let dir = explicit.unwrap_or_else(|| {
        let root = std::env::var_os("CTR_OUT_ROOT").map_or_else(|| PathBuf::from("runs"), PathBuf::from);
        root.join(command)
    });
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}
