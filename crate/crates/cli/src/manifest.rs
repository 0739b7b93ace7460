//! Run manifest: what ran, with which configuration, and what it produced.

use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::Config;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Ok,
    /// The run completed but its check or verdict did not pass.
    CheckFailed,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArtifactEntry {
    pub file: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Versions {
    pub treewalk_cli: &'static str,
    pub treewalk_core: &'static str,
    pub parallel_feature: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub command: String,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config: Option<Config>,
    pub versions: Versions,
    pub artifacts: Vec<ArtifactEntry>,
}

impl Manifest {
    pub fn new(command: &str) -> Self {
        Manifest {
            command: command.to_string(),
            status: Status::Error,
            reason: None,
            seed: None,
            config_hash: None,
            config: None,
            versions: Versions {
                treewalk_cli: env!("CARGO_PKG_VERSION"),
                treewalk_core: treewalk::VERSION,
                parallel_feature: cfg!(feature = "parallel"),
            },
            artifacts: Vec::new(),
        }
    }

    pub fn with_config(mut self, config: &Config) -> Self {
        self.seed = Some(config.experiment.seed);
        self.config_hash = Some(config.hash());
        self.config = Some(config.clone());
        self
    }

    pub fn record(&mut self, file: &str, bytes: &[u8]) {
        self.artifacts.push(ArtifactEntry {
            file: file.to_string(),
            bytes: bytes.len(),
            sha256: hex::encode(Sha256::digest(bytes)),
        });
    }

    pub fn file_name(command: &str) -> String {
        format!("manifest-{command}.json")
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut json = serde_json::to_vec_pretty(self).expect("manifest serializes");
        json.push(b'\n');
        std::fs::write(dir.join(Self::file_name(&self.command)), json)
    }
}
