use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

/// Record of one command invocation. Wall-clock timing is kept in a
/// separate file named by `timing` so that identical runs produce
/// byte-identical manifests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    /// Fully resolved settings; passing the manifest as `--config` reruns it.
    pub settings: Value,
    pub seed: u64,
    pub inputs: Vec<InputDigest>,
    /// Hash over the settings and every input digest.
    pub input_hash: String,
    /// Files written, relative to the output directory.
    pub outputs: Vec<String>,
    pub timing: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: PathBuf,
    pub sha256: String,
}

/// Git-style blob hash (`blob <len>\0` header), with SHA-256.
pub fn blob_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex::encode(h.finalize())
}

pub fn digest_file(path: &Path) -> Result<InputDigest> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(InputDigest {
        path: path.to_path_buf(),
        sha256: blob_hash(&bytes),
    })
}

impl RunManifest {
    pub fn new(command: &str, settings: Value, seed: u64, inputs: Vec<InputDigest>, outputs: Vec<String>) -> Self {
        let mut h = Sha256::new();
        h.update(settings.to_string().as_bytes());
        for i in &inputs {
            h.update(i.sha256.as_bytes());
        }
        RunManifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            settings,
            seed,
            inputs,
            input_hash: hex::encode(h.finalize()),
            outputs,
            timing: crate::output::TIMING_FILE.to_string(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|source| CliError::Json {
            path: path.into(),
            source,
        })
    }
}
