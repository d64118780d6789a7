use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, DualError>;

#[derive(Debug, Error)]
pub enum DualError {
    /// A caller broke an operation's precondition (shapes, counts, ranges).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A NaN or infinity showed up during training.
    #[error("numeric failure in {stage}{}", epoch.map(|e| format!(" at epoch {e}")).unwrap_or_default())]
    Numeric { stage: String, epoch: Option<usize> },

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl DualError {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        DualError::Contract(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DualError::Io {
            path: path.into(),
            source,
        }
    }
}
