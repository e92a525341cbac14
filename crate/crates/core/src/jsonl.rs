//! JSON-Lines artifact I/O with an optional header line.
//!
//! Pipeline artifacts start with a single header record carrying the seed
//! and config hash that produced them; readers skip it transparently.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::PipelineError;

/// First line of every pipeline artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactHeader {
    pub header: HeaderFields,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeaderFields {
    pub seed: u64,
    pub config_hash: String,
    /// Prediction producers declare their log-probability convention
    /// here (e.g. "none" or "length_normalized").
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logprob_norm: Option<String>,
}

impl ArtifactHeader {
    pub fn new(seed: u64, config_hash: &str) -> Self {
        ArtifactHeader {
            header: HeaderFields {
                seed,
                config_hash: config_hash.to_string(),
                logprob_norm: None,
            },
        }
    }

    pub fn with_logprob_norm(mut self, norm: &str) -> Self {
        self.header.logprob_norm = Some(norm.to_string());
        self
    }
}

fn is_header_line(line: &str) -> bool {
    serde_json::from_str::<ArtifactHeader>(line).is_ok()
}

/// Read records from a JSONL file. A leading header line (if present) is
/// skipped. Corrupt lines are a hard error reported with their line number.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, PipelineError> {
    let file = File::open(path).map_err(|e| PipelineError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let reader = BufReader::new(file);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| PipelineError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        if i == 0 && is_header_line(&line) {
            continue;
        }
        match serde_json::from_str(&line) {
            Ok(rec) => out.push(rec),
            Err(e) => {
                return Err(PipelineError::CorruptLine {
                    path: path.display().to_string(),
                    line: i + 1,
                    message: e.to_string(),
                })
            }
        }
    }
    Ok(out)
}

/// Read the header of an artifact, if it has one.
pub fn read_header(path: &Path) -> Result<Option<ArtifactHeader>, PipelineError> {
    let file = File::open(path).map_err(|e| PipelineError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let mut reader = BufReader::new(file);
    let mut first = String::new();
    reader.read_line(&mut first).map_err(|e| PipelineError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    Ok(serde_json::from_str(&first).ok())
}

/// Write records as JSONL with a header line.
pub fn write_jsonl<T: Serialize>(
    path: &Path,
    header: &ArtifactHeader,
    records: &[T],
) -> Result<(), PipelineError> {
    let file = File::create(path).map_err(|e| PipelineError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let mut w = BufWriter::new(file);
    let io_err = |e: std::io::Error| PipelineError::Io {
        path: path.display().to_string(),
        source: e,
    };
    serde_json::to_writer(&mut w, header).map_err(PipelineError::from)?;
    w.write_all(b"\n").map_err(io_err)?;
    for rec in records {
        serde_json::to_writer(&mut w, rec).map_err(PipelineError::from)?;
        w.write_all(b"\n").map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}
