//! Stage manifests: content hashes of inputs, the seed, and tool versions,
//! written next to each stage's outputs so any run can be reproduced and
//! downstream stages can verify what they consume.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageManifest {
    pub v: u32,
    pub stage: String,
    pub seed: u64,
    pub tool_version: String,
    /// Input path -> sha256 of the file contents.
    pub inputs: BTreeMap<String, String>,
    /// Output path -> sha256, filled after the stage completes.
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("io on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("manifest parse: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unsupported manifest version {0}")]
    Version(u32),
    #[error("hash mismatch for {path}: manifest {expected}, file {actual}")]
    HashMismatch {
        path: String,
        expected: String,
        actual: String,
    },
}

pub fn hash_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn hash_file(path: impl AsRef<Path>) -> Result<String, ManifestError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| ManifestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(hash_bytes(&bytes))
}

impl StageManifest {
    pub fn new(stage: impl Into<String>, seed: u64) -> Self {
        StageManifest {
            v: MANIFEST_VERSION,
            stage: stage.into(),
            seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    pub fn record_input(&mut self, path: impl AsRef<Path>) -> Result<(), ManifestError> {
        let hash = hash_file(&path)?;
        self.inputs
            .insert(path.as_ref().display().to_string(), hash);
        Ok(())
    }

    pub fn record_output(&mut self, path: impl AsRef<Path>) -> Result<(), ManifestError> {
        let hash = hash_file(&path)?;
        self.outputs
            .insert(path.as_ref().display().to_string(), hash);
        Ok(())
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), ManifestError> {
        let path = path.as_ref();
        let body = serde_json::to_string_pretty(self)?;
        std::fs::write(path, body).map_err(|source| ManifestError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, ManifestError> {
        let path = path.as_ref();
        let body = std::fs::read_to_string(path).map_err(|source| ManifestError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let m: StageManifest = serde_json::from_str(&body)?;
        if m.v != MANIFEST_VERSION {
            return Err(ManifestError::Version(m.v));
        }
        Ok(m)
    }

    /// Re-hash every recorded output and fail on the first mismatch. Lets a
    /// downstream stage verify its upstream artifacts before consuming them.
    pub fn verify_outputs(&self) -> Result<(), ManifestError> {
        for (path, expected) in &self.outputs {
            let actual = hash_file(path)?;
            if &actual != expected {
                return Err(ManifestError::HashMismatch {
                    path: path.clone(),
                    expected: expected.clone(),
                    actual,
                });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_known_vector() {
        assert_eq!(
            hash_bytes(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn round_trip_and_verify() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("input.jsonl");
        std::fs::write(&input, "line\n").unwrap();

        let mut m = StageManifest::new("label", 42);
        m.record_input(&input).unwrap();
        m.record_output(&input).unwrap();
        let mpath = dir.path().join("manifest.json");
        m.write(&mpath).unwrap();

        let back = StageManifest::read(&mpath).unwrap();
        assert_eq!(back, m);
        back.verify_outputs().unwrap();

        std::fs::write(&input, "tampered\n").unwrap();
        assert!(matches!(
            back.verify_outputs(),
            Err(ManifestError::HashMismatch { .. })
        ));
    }

    #[test]
    fn version_gate() {
        let dir = tempfile::tempdir().unwrap();
        let mpath = dir.path().join("manifest.json");
        let mut m = StageManifest::new("synth", 0);
        m.v = 9;
        std::fs::write(&mpath, serde_json::to_string(&m).unwrap()).unwrap();
        assert!(matches!(
            StageManifest::read(&mpath),
            Err(ManifestError::Version(9))
        ));
    }
}
