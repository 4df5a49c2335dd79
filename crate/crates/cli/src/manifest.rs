//! Run manifests: enough to reproduce any output byte for byte.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepManifest {
    pub tool: String,
    pub version: String,
    pub config_sha256: String,
    pub config: ExperimentConfig,
}

/// Hash of the experiment identity: everything except where the output
/// lands, so the same experiment re-run into a different directory
/// reproduces the same artifacts.
pub fn config_hash(config: &ExperimentConfig) -> String {
    let mut normalized = config.clone();
    normalized.output_dir = std::path::PathBuf::new();
    let mut hasher = Sha256::new();
    hasher.update(normalized.canonical_json().as_bytes());
    hex_encode(&hasher.finalize())
}

fn hex_encode(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

impl SweepManifest {
    pub fn new(config: &ExperimentConfig) -> Self {
        Self {
            tool: "milbench".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config_sha256: config_hash(config),
            config: config.clone(),
        }
    }

    pub fn write(&self, path: &Path) -> anyhow::Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    /// On resume the stored config must match the requested one exactly.
    pub fn check_compatible(&self, config: &ExperimentConfig) -> anyhow::Result<()> {
        let hash = config_hash(config);
        if hash != self.config_sha256 {
            anyhow::bail!(
                "existing manifest was produced by a different config (hash {} vs {hash}); \
                 use a fresh output directory",
                self.config_sha256
            );
        }
        Ok(())
    }
}
