use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the toolkit.
///
/// Ingest errors carry the 1-based line number of the offending row in the
/// source file so diagnostics can point at it directly.
#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: malformed row: {message}")]
    MalformedRow { line: usize, message: String },

    #[error("line {line}: inconsistent logit arity (expected {expected}, found {found})")]
    InconsistentArity { line: usize, expected: usize, found: usize },

    #[error("line {line}: gold_label out of range ({label} not in [0, {num_classes}))")]
    LabelOutOfRange {
        line: usize,
        label: i64,
        num_classes: usize,
    },

    #[error("line {line}: non-finite logit at index {index}")]
    NonFiniteLogit { line: usize, index: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid label space: {0}")]
    LabelSpace(String),

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid temperature {0}: must be finite and > 0")]
    InvalidTemperature(f64),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
