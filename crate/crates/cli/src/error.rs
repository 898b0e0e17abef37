use std::path::PathBuf;

use thiserror::Error;

/// Failure of a command, grouped by the process exit code it maps to.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, bad config keys, impossible combinations (exit 1).
    #[error("usage: {0}")]
    Usage(String),

    /// Unreadable, malformed or inconsistent input (exit 2).
    #[error("{0}")]
    Data(String),

    /// Divergence or a failed verification (exit 3).
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }

    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Self::Usage(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Self::Data(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, e: std::io::Error) -> Self {
        Self::Data(format!("{}: {e}", path.into().display()))
    }
}

impl From<gasp_core::Error> for CliError {
    fn from(e: gasp_core::Error) -> Self {
        match e {
            gasp_core::Error::Numeric(_) => CliError::Numeric(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
