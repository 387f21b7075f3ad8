use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}:{line}: answer {answer:?} matches no choice of example {id}")]
    LabelResolution {
        path: PathBuf,
        line: usize,
        id: String,
        answer: String,
    },

    #[error("duplicate id {0:?}")]
    DuplicateId(String),

    #[error("invalid example {id}: {reason}")]
    InvalidExample { id: String, reason: String },

    #[error("range error: {0}")]
    Range(String),

    #[error("example {0} has no annotation")]
    MissingAnnotation(String),

    #[error("sequence of length {len} exceeds the limit of {limit}")]
    Length { len: usize, limit: usize },

    #[error("input error: {0}")]
    Input(String),

    #[error("non-finite value in tensor {tensor} at step {step}")]
    NonFinite { tensor: String, step: u64 },

    #[error("shape mismatch for {name}: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        name: String,
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("{0} is empty")]
    Empty(&'static str),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("invalid pipeline spec: {0}")]
    Spec(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
