use std::path::PathBuf;

use thiserror::Error;

/// Exit code for a failed check or assertion.
pub const EXIT_CHECK: i32 = 1;
/// Exit code for usage, configuration and input errors.
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, config values or input data.
    #[error("{0}")]
    Usage(String),

    /// The command ran but a verification did not hold.
    #[error("{0}")]
    Check(String),

    #[error(transparent)]
    Core(#[from] cvxattn_core::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("config {path}: {source}")]
    Config {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("writing CSV: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Check(_) => EXIT_CHECK,
            _ => EXIT_USAGE,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
