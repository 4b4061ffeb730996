use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the library reports. `kind()` gives a stable token for
/// machine-parsable CLI output.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid config: {0}")]
    Config(String),

    #[error("{op}: shape mismatch {shapes}")]
    Shape { op: &'static str, shapes: String },

    #[error("out of range: {0}")]
    Range(String),

    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    #[error("triplet mining: {0}")]
    Mining(String),

    #[error("gradient missing for parameter `{0}`")]
    MissingGrad(String),

    #[error("checkpoint mismatch, missing parameters: {0:?}")]
    Checkpoint(Vec<String>),

    #[error("dataset: {0}")]
    Dataset(String),

    #[error("tolerance exceeded: {0}")]
    Tolerance(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed at byte {offset}: {msg}")]
    Parse {
        path: PathBuf,
        offset: u64,
        msg: String,
    },
}

impl Error {
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Shape { .. } => "shape",
            Error::Range(_) => "range",
            Error::Degenerate(_) => "degenerate",
            Error::Mining(_) => "mining",
            Error::MissingGrad(_) => "missing_grad",
            Error::Checkpoint(_) => "checkpoint",
            Error::Dataset(_) => "dataset",
            Error::Tolerance(_) => "tolerance",
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
        }
    }

    pub(crate) fn shape(op: &'static str, shapes: impl Into<String>) -> Self {
        Error::Shape {
            op,
            shapes: shapes.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
