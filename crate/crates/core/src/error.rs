use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the library and CLI.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{func}: argument {value} outside domain {domain}")]
    Domain {
        func: &'static str,
        value: f64,
        domain: &'static str,
    },

    #[error("tape error: {0}")]
    Tape(String),

    #[error("non-finite value produced by layer {layer} ({stage})")]
    NonFinite { layer: usize, stage: &'static str },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: u64, msg: String },

    #[error("invalid data: {0}")]
    Data(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("training diverged at epoch {epoch}: {reason}")]
    Diverged { epoch: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn domain(func: &'static str, value: f64, domain: &'static str) -> Error {
    Error::Domain { func, value, domain }
}
