use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("singular matrix: {0}")]
    SingularMatrix(String),

    #[error("index {index} excluded: {reason}")]
    ExcludedIndex { index: usize, reason: &'static str },

    #[error("training diverged in half-epoch {half_epoch} at step {step}")]
    Diverged { half_epoch: usize, step: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },

    #[error("file not found: {}", .0.display())]
    NotFound(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn format(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Format {
            what,
            detail: detail.into(),
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_) | Error::Config(_) | Error::ExcludedIndex { .. } => 2,
            Error::Numeric(_) | Error::SingularMatrix(_) | Error::Diverged { .. } => 3,
            Error::Format { .. } | Error::NotFound(_) | Error::Io(_) => 4,
        }
    }
}
