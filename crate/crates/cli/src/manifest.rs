//! Run provenance: every command drops a manifest beside its primary output
//! so a result file can be traced back to the exact inputs that made it.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use chrono::{DateTime, SecondsFormat, Utc};
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Provenance record for one command invocation. `config_digest` is the
/// SHA-256 of the governing input document (training config for `train`,
/// weight file for the model-consuming commands), so outputs and inputs can
/// be matched byte-exactly. Timestamps are the only non-deterministic
/// fields; the data artifacts themselves are byte-reproducible.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_digest: String,
    pub seed: u64,
    pub started: String,
    pub finished: String,
    pub output_paths: Vec<String>,
    pub tool_version: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn timestamp(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Micros, true)
}

impl RunManifest {
    pub fn new(
        command: &str,
        config_digest: String,
        seed: u64,
        started: DateTime<Utc>,
        output_paths: Vec<&Path>,
    ) -> Self {
        Self {
            command: command.to_string(),
            config_digest,
            seed,
            started: timestamp(started),
            finished: timestamp(Utc::now()),
            output_paths: output_paths
                .iter()
                .map(|p| p.display().to_string())
                .collect(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    /// Writes `<primary_output stem>.manifest.json` next to the output it
    /// describes and returns that path.
    pub fn write_beside(&self, primary_output: &Path) -> Result<PathBuf> {
        let path = primary_output.with_extension("manifest.json");
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(&path, text)
            .with_context(|| format!("writing manifest {}", path.display()))?;
        Ok(path)
    }
}
