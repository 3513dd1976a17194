//! Self-describing JSON checkpoints: configuration, corpus, and full model
//! state (factors, counts, per-document sampling streams). Floating-point
//! fields round-trip bit-exactly through the shortest-representation JSON
//! encoding.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::Corpus;
use crate::run::{AlgoConfig, Model};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("checkpoint format version {found} unsupported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub algorithm: String,
    pub seed: u64,
    /// Configuration echoed verbatim for provenance.
    pub config: AlgoConfig,
    /// The corpus the model was trained against (vocabulary and documents),
    /// needed to score text-dependent models at evaluation time.
    pub corpus: Corpus,
    pub model: Model,
}

impl Checkpoint {
    pub fn new(config: AlgoConfig, corpus: Corpus, model: Model, seed: u64) -> Self {
        Checkpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            algorithm: config.kind().to_string(),
            seed,
            config,
            corpus,
            model,
        }
    }
}

pub fn save(path: &Path, checkpoint: &Checkpoint) -> Result<(), CheckpointError> {
    let json = serde_json::to_string(checkpoint)?;
    std::fs::write(path, json).map_err(|source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Load and revalidate a checkpoint, rebuilding the derived caches that are
/// not serialized.
pub fn load(path: &Path) -> Result<Checkpoint, CheckpointError> {
    let bytes = std::fs::read(path).map_err(|source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut checkpoint: Checkpoint = serde_json::from_slice(&bytes)?;
    if checkpoint.format_version != CHECKPOINT_FORMAT_VERSION {
        return Err(CheckpointError::VersionMismatch {
            found: checkpoint.format_version,
            expected: CHECKPOINT_FORMAT_VERSION,
        });
    }
    checkpoint.corpus.vocabulary.rebuild_index();
    checkpoint.model.after_load();
    Ok(checkpoint)
}
