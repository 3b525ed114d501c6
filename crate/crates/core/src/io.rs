//! JSONL dataset I/O.
//!
//! One object per line, UTF-8, no BOM. Every line carries a schema version
//! field `v`; readers accept missing `v` as 1 and reject other major
//! versions. Unknown fields are ignored for forward compatibility.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{ProgressRecord, Trajectory};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        source: serde_json::Error,
    },
    #[error("line {line}: unsupported schema version {found}")]
    SchemaVersion { line: usize, found: u32 },
}

#[derive(Serialize)]
struct Versioned<'a, T> {
    v: u32,
    #[serde(flatten)]
    body: &'a T,
}

fn default_version() -> u32 {
    SCHEMA_VERSION
}

#[derive(Deserialize)]
struct VersionProbe {
    #[serde(default = "default_version")]
    v: u32,
}

/// A trajectory together with its per-timestep progress labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledTrajectory<S> {
    #[serde(flatten)]
    pub trajectory: Trajectory<S>,
    pub progress: Vec<ProgressRecord<S>>,
}

/// Write any serializable records as versioned JSONL.
pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<(), IoError> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        let line = serde_json::to_string(&Versioned {
            v: SCHEMA_VERSION,
            body: r,
        })
        .expect("serializable record");
        w.write_all(line.as_bytes())?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Read versioned JSONL records, rejecting unknown major versions.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, IoError> {
    let r = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let probe: VersionProbe =
            serde_json::from_str(&line).map_err(|source| IoError::Parse { line: i + 1, source })?;
        if probe.v != SCHEMA_VERSION {
            return Err(IoError::SchemaVersion {
                line: i + 1,
                found: probe.v,
            });
        }
        let rec =
            serde_json::from_str(&line).map_err(|source| IoError::Parse { line: i + 1, source })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn read_trajectories<S: DeserializeOwned>(path: &Path) -> Result<Vec<Trajectory<S>>, IoError> {
    read_jsonl(path)
}

pub fn write_trajectories<S: Serialize>(
    path: &Path,
    trajectories: &[Trajectory<S>],
) -> Result<(), IoError> {
    write_jsonl(path, trajectories)
}
