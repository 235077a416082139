use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("index {index} out of range (size {size})")]
    IndexOutOfRange { index: usize, size: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("power iteration did not converge after {iterations} iterations (last estimate {last})")]
    NonConvergence { iterations: usize, last: f64 },

    #[error("eigensolver did not converge: {0}")]
    EigenSolve(String),

    #[error("simplification stalled at {reachable} nodes (target {target})")]
    SimplifyStalled { reachable: usize, target: usize },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("loss became NaN at epoch {epoch}")]
    NanLoss { epoch: usize },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

