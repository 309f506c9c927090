use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the simulator.
#[derive(Debug, Error)]
pub enum FedError {
    /// A configuration value is out of range or inconsistent with another.
    #[error("invalid configuration `{field}`: {reason}")]
    Config { field: String, reason: String },

    /// A dataset, shard or batch violates a precondition.
    #[error("data error: {0}")]
    Data(String),

    #[error("aggregation error: {0}")]
    Aggregation(String),

    #[error("attack error: {0}")]
    Attack(String),

    /// Malformed input file. `path` names the offending file.
    #[error("failed to ingest {}: {reason}", path.display())]
    Ingest { path: PathBuf, reason: String },

    /// A simulation round failed; wraps the underlying cause.
    #[error("round {round} failed: {source}")]
    Round {
        round: usize,
        #[source]
        source: Box<FedError>,
    },

    /// Two results cannot be compared (their base digests differ).
    #[error("comparison error: {0}")]
    Comparison(String),

    #[error("report error: {0}")]
    Report(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl FedError {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        FedError::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn ingest(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        FedError::Ingest {
            path: path.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, FedError>;
