// SPDX-License-Identifier: MIT OR Apache-2.0

//! Provenance record embedded in every artifact the CLI writes.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub config: serde_json::Value,
    pub inputs: Vec<InputDigest>,
    pub seed: u64,
    pub toolkit_version: String,
    pub workers: usize,
    /// Omitted in deterministic mode so repeated runs are byte-identical.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_clock_secs: Option<f64>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn digest_file(path: &Path) -> Result<InputDigest> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(InputDigest {
        path: path.display().to_string(),
        sha256: sha256_hex(&bytes),
    })
}

impl RunManifest {
    /// Re-hash every recorded input and compare with the stored digest.
    pub fn verify_inputs(&self) -> Result<()> {
        for input in &self.inputs {
            let now = digest_file(Path::new(&input.path))?;
            if now.sha256 != input.sha256 {
                return Err(Error::Config(format!(
                    "input {} changed since the run (digest mismatch)",
                    input.path
                )));
            }
        }
        Ok(())
    }
}
