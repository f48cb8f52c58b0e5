use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the crate.
#[derive(Debug, Error)]
pub enum QacnnError {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    Config(String),

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

    #[error("record {index}: key `{key}`: {message}")]
    Schema {
        index: usize,
        key: String,
        message: String,
    },

    #[error("data error: {0}")]
    Data(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl QacnnError {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        QacnnError::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        QacnnError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for this error: 1 usage, 2 data, 3 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            QacnnError::InvalidArgument(_) | QacnnError::Config(_) => 1,
            QacnnError::Io { .. }
            | QacnnError::Parse { .. }
            | QacnnError::Schema { .. }
            | QacnnError::Data(_)
            | QacnnError::Checkpoint(_) => 2,
            QacnnError::Shape { .. } | QacnnError::Numeric(_) => 3,
        }
    }
}

pub type Result<T, E = QacnnError> = std::result::Result<T, E>;
