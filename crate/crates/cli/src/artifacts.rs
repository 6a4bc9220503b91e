//! Output directory handling, checksums, and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

/// Collects files written during a run and finalizes the manifest.
pub struct ArtifactSink {
    dir: PathBuf,
    files: Vec<FileRecord>,
    started_at: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct FileRecord {
    pub file: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Serialize)]
struct Manifest<'a> {
    experiment: &'a str,
    artifact_version: &'a str,
    started_at: &'a str,
    finished_at: String,
    master_seed: u64,
    flagged_runs: usize,
    config: &'a RunConfig,
    outputs: &'a [FileRecord],
}

impl ArtifactSink {
    pub fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)
            .with_context(|| format!("creating output directory {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
            started_at: chrono::Utc::now().to_rfc3339(),
        })
    }

    /// Write one artifact atomically (temp file + rename) and record its
    /// checksum.
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
        fs::rename(&tmp, &path)?;
        let digest = Sha256::digest(bytes);
        self.files.push(FileRecord {
            file: name.to_string(),
            sha256: hex::encode(digest),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// Write the manifest; called once after all other artifacts.
    pub fn finalize(self, config: &RunConfig, experiment: &str, flagged_runs: usize) -> Result<()> {
        let manifest = Manifest {
            experiment,
            artifact_version: env!("CARGO_PKG_VERSION"),
            started_at: &self.started_at,
            finished_at: chrono::Utc::now().to_rfc3339(),
            master_seed: config.master_seed,
            flagged_runs,
            config,
            outputs: &self.files,
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        let path = self.dir.join("manifest.json");
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, text.as_bytes())?;
        fs::rename(&tmp, &path)?;
        Ok(())
    }
}
