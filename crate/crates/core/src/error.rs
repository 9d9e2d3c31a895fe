use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
///
/// Variants map onto the CLI exit statuses through [`Error::exit_code`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("format error at byte offset {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("truncated payload: expected {expected} bytes at offset {offset}, found {found}")]
    Truncated {
        offset: u64,
        expected: u64,
        found: u64,
    },

    #[error("non-finite value in {0}")]
    NumericInput(String),

    #[error("training diverged at epoch {epoch}: {message}")]
    Diverged { epoch: usize, message: String },

    #[error("no checkpoint stored for epoch {0}")]
    CheckpointNotFound(usize),

    #[error("unsupported architecture: {0}")]
    UnsupportedArch(String),

    #[error("class {0} has no samples")]
    DegenerateClass(usize),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(offset: u64, message: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: message.into(),
        }
    }

    /// Process exit status: 2 config, 3 I/O or format, 4 numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidConfig(_)
            | Error::InvalidInput(_)
            | Error::InvalidArgument(_)
            | Error::UnsupportedArch(_)
            | Error::DegenerateClass(_) => 2,
            Error::Format { .. }
            | Error::Truncated { .. }
            | Error::Io { .. }
            | Error::Parse { .. }
            | Error::CheckpointNotFound(_) => 3,
            Error::NumericInput(_) | Error::Diverged { .. } => 4,
        }
    }
}
