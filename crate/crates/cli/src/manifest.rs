//! Run manifests: what produced an output directory.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Exact configuration text the run used.
    pub config: String,
    pub seed: u64,
    /// SHA-256 over the config text and every input file.
    pub input_hash: String,
    pub inputs: Vec<PathBuf>,
    pub output_dir: PathBuf,
    pub started_unix_s: f64,
    pub finished_unix_s: f64,
}

pub fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0.0, |d| d.as_secs_f64())
}

/// Hash of the config text followed by each input's name and bytes, each
/// length-prefixed so no two input sets collide by concatenation.
pub fn content_hash(config: &str, inputs: &[PathBuf]) -> Result<String, CliError> {
    let mut h = Sha256::new();
    let mut field = |bytes: &[u8]| {
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(bytes);
    };
    field(config.as_bytes());
    for path in inputs {
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        field(name.as_bytes());
        field(&fs::read(path).map_err(|e| CliError::io(path, e))?);
    }
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

impl RunManifest {
    pub fn new(
        command: &str,
        config: String,
        seed: u64,
        inputs: Vec<PathBuf>,
        out: &Path,
        started: f64,
    ) -> Result<Self, CliError> {
        Ok(Self {
            command: command.to_string(),
            input_hash: content_hash(&config, &inputs)?,
            config,
            seed,
            inputs,
            output_dir: out.to_path_buf(),
            started_unix_s: started,
            finished_unix_s: unix_now(),
        })
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))
    }
}
