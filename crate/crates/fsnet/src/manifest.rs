//! Run manifests: what produced an artifact, from which inputs, and when.
//!
//! Timestamps live only here, so models and reports stay byte-identical
//! across reruns.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ConfigOverrides;
use crate::FormatError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

impl FileDigest {
    pub fn of(path: &Path) -> Result<Self, FormatError> {
        let data = std::fs::read(path).map_err(|e| FormatError::io(path, e))?;
        Ok(Self::of_bytes(path, &data))
    }

    /// Digest of `data`, which is about to be written to `path`.
    pub fn of_bytes(path: &Path, data: &[u8]) -> Self {
        FileDigest {
            path: path.display().to_string(),
            sha256: hex::encode(Sha256::digest(data)),
            bytes: data.len() as u64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    /// Resolved training configuration, for commands that train.
    pub config: Option<ConfigOverrides>,
}

pub fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

impl RunManifest {
    pub fn start(command: &str, seed: u64) -> Self {
        RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            seed,
            started_unix: unix_now(),
            finished_unix: 0,
            inputs: Vec::new(),
            outputs: Vec::new(),
            config: None,
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<(), FormatError> {
        self.inputs.push(FileDigest::of(path)?);
        Ok(())
    }

    pub fn output(&mut self, path: &Path, data: &[u8]) {
        self.outputs.push(FileDigest::of_bytes(path, data));
    }

    pub fn render(&mut self) -> Result<String, FormatError> {
        self.finished_unix = unix_now();
        toml::to_string(self).map_err(|e| FormatError::Invalid(e.to_string()))
    }

    pub fn parse(text: &str) -> Result<Self, FormatError> {
        toml::from_str(text).map_err(|e| FormatError::Invalid(e.to_string()))
    }
}

/// `<artifact>.manifest.toml`
pub fn manifest_path(artifact: &Path) -> PathBuf {
    let mut s = artifact.as_os_str().to_owned();
    s.push(".manifest.toml");
    PathBuf::from(s)
}
