use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("corpus error at {path}: {reason}")]
    Corpus { path: PathBuf, reason: String },

    #[error("empty document(s): {}", .0.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", "))]
    EmptyDocuments(Vec<PathBuf>),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("embedding file {path}, line {line}: {reason}")]
    EmbeddingFormat {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("training diverged at epoch {epoch} (learning rate {learning_rate}): non-finite loss")]
    Diverged { epoch: usize, learning_rate: f64 },

    #[error("non-finite value in layer `{layer}`")]
    NonFinite { layer: String },

    #[error("stale cache: {0}")]
    StaleCache(String),

    #[error("unsupported architecture for this operation: {0}")]
    WrongArchitecture(String),

    #[error("format version mismatch: file has {found}, this build reads {expected}")]
    VersionMismatch { expected: u32, found: u32 },

    #[error("parse error in {what}: {reason}")]
    Parse { what: String, reason: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn parse(what: impl Into<String>, reason: impl ToString) -> Self {
        Error::Parse {
            what: what.into(),
            reason: reason.to_string(),
        }
    }
}
