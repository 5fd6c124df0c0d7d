use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = CoachError> = std::result::Result<T, E>;

/// Errors shared by the corpus, index and evaluation modules.
#[derive(Debug, Error)]
pub enum CoachError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("missing file: {0}")]
    MissingFile(PathBuf),

    #[error("failed to parse {what}: {message}")]
    Parse { what: String, message: String },

    #[error("duplicate id: {0}")]
    DuplicateId(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("embedding backend error: {message}")]
    Embedding { message: String, retryable: bool },

    #[error("configuration error: {0}")]
    Config(String),
}

impl CoachError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CoachError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(what: impl Into<String>, message: impl ToString) -> Self {
        CoachError::Parse {
            what: what.into(),
            message: message.to_string(),
        }
    }

    /// True for transient failures worth retrying (embedding transport errors).
    pub fn is_retryable(&self) -> bool {
        matches!(
            self,
            CoachError::Embedding {
                retryable: true,
                ..
            }
        )
    }
}
