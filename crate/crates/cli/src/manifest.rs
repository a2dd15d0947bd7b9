//! Provenance manifests written next to every command's outputs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliResult;
use crate::fsio::{self, Outputs};

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub software: String,
    pub version: String,
    pub seed: u64,
    /// Hash of the config file bytes; the empty-input hash without one.
    pub config_sha256: String,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
    /// Hash over the config hash, seed and input hashes.
    pub provenance_sha256: String,
}

impl Manifest {
    pub fn new(command: &str, seed: u64, config_bytes: Option<&[u8]>, inputs: &[PathBuf]) -> CliResult<Self> {
        let config_sha256 = sha256_hex(config_bytes.unwrap_or_default());
        let mut hashed = Vec::with_capacity(inputs.len());
        for p in inputs {
            hashed.push(FileHash { path: p.display().to_string(), sha256: sha256_hex(&fsio::read(p)?) });
        }
        let mut h = Sha256::new();
        h.update(command.as_bytes());
        h.update(config_sha256.as_bytes());
        h.update(seed.to_le_bytes());
        for f in &hashed {
            h.update(f.sha256.as_bytes());
        }
        Ok(Self {
            command: command.to_string(),
            software: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            config_sha256,
            inputs: hashed,
            outputs: Vec::new(),
            provenance_sha256: format!("{:x}", h.finalize()),
        })
    }

    /// Records the pending outputs, relative to `out_dir`, and adds the
    /// manifest itself to them.
    pub fn attach(mut self, out_dir: &Path, outputs: &mut Outputs) {
        self.outputs = outputs
            .paths()
            .map(|p| FileHash {
                path: p.strip_prefix(out_dir).unwrap_or(p).display().to_string(),
                sha256: sha256_hex(outputs.get(p).unwrap_or_default()),
            })
            .collect();
        let json = serde_json::to_vec_pretty(&self).expect("manifest serializes");
        outputs.add(out_dir.join(MANIFEST_FILE), json);
    }
}
