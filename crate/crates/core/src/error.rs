use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("variable index {index} out of bounds for regressor of length {len}")]
    VariableOutOfBounds { index: usize, len: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("not enough data: {0}")]
    InsufficientData(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("malformed file {path}: {message}")]
    Malformed { path: PathBuf, message: String },

    #[error("non-finite model output at grid node {node} (state {state:?}, action {action:?})")]
    NonFiniteModel {
        node: usize,
        state: Vec<f64>,
        action: Vec<f64>,
    },

    #[error("value iteration did not converge within {sweeps} sweeps (last change {last_change:e})")]
    NotConverged { sweeps: usize, last_change: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("expression syntax error at byte {pos}: {message}")]
    Syntax { pos: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
