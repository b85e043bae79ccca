use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("loss is not a scalar (shape {0:?})")]
    NotScalar(Vec<usize>),

    #[error("backward called on a value that does not depend on any tracked input")]
    Untracked,

    #[error("format error: {0}")]
    Format(String),

    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the command-line tool.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Config { .. } | Error::InvalidArgument(_) => 2,
            Error::Format(_) | Error::Shape { .. } => 3,
            Error::NonFinite { .. } | Error::NotScalar(_) | Error::Untracked => 4,
            Error::Io { .. } => 1,
        }
    }
}
