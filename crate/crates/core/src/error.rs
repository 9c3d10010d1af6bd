use std::path::PathBuf;

use thiserror::Error;

use crate::model::Stream;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("value {value} outside support [{min}, {max}]")]
    OutOfSupport { value: i64, min: i64, max: i64 },

    #[error("sequence is empty")]
    EmptySequence,

    #[error("total weight is zero")]
    ZeroWeight,

    #[error("token id {id} out of range for vocabulary of size {vocab_size}")]
    UnknownToken { id: usize, vocab_size: usize },

    #[error("{stream} stream: token id {id} out of range for vocabulary of size {vocab_size}")]
    UnknownStreamToken {
        stream: Stream,
        id: usize,
        vocab_size: usize,
    },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("scalar `{0}` is observed in the episode; inference requires it to be absent")]
    ScalarObserved(&'static str),

    #[error("line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("line {line}: unknown {stream} token `{token}`")]
    UnknownTokenName {
        line: usize,
        stream: Stream,
        token: String,
    },

    #[error("line {line}: {message}")]
    SchemaViolation { line: usize, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_stream(self, stream: Stream) -> Self {
        match self {
            Error::UnknownToken { id, vocab_size } => Error::UnknownStreamToken {
                stream,
                id,
                vocab_size,
            },
            other => other,
        }
    }
}
