use std::path::{Path, PathBuf};

use latentgeo_core::Error as CoreError;

/// Failures surfaced to the command line, each with a stable exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },
    #[error("missing checkpoint {0}")]
    MissingCheckpoint(PathBuf),
    #[error("numerical failure: {0}")]
    Numerical(#[source] CoreError),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io { .. } | CliError::Format { .. } | CliError::MissingCheckpoint(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn format(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Format {
            path: path.to_path_buf(),
            msg: e.to_string(),
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Config(m) => CliError::Config(m),
            CoreError::SingleClass => CliError::Config(e.to_string()),
            other => CliError::Numerical(other),
        }
    }
}
