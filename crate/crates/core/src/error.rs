//! Crate-wide error type.

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A tensor operation received operands of incompatible shape.
    #[error("shape mismatch in {op}: left {left:?} vs right {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    /// An operation produced a NaN or infinity; the computation is aborted.
    #[error("non-finite value produced by {op}")]
    NonFinite { op: String },

    /// Input violated a domain precondition (bad angle range, empty DDM, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Otsu thresholding on a histogram with no usable class split.
    #[error("degenerate histogram: all values fall into a single bin")]
    DegenerateHistogram,

    /// Aggregate training abort carrying batch diagnostics.
    #[error("numerical abort: {0}")]
    NumericalAbort(String),

    /// Malformed data file (JSONL record, PGM, CSV, checkpoint).
    #[error("data error in {path}: {message}")]
    Data { path: PathBuf, message: String },

    /// Invalid run configuration.
    #[error("config error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn data(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Data {
            path: path.into(),
            message: msg.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
