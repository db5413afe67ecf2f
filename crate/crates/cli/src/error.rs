use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("computation failed: {0}")]
    Compute(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Compute(_) => 3,
            CliError::Io { .. } => 4,
        }
    }

    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Invalid inputs are config errors; everything that fails while computing
/// on valid inputs maps to the fit/computation exit code.
impl From<rer_core::Error> for CliError {
    fn from(e: rer_core::Error) -> Self {
        match e {
            rer_core::Error::Domain(msg) => CliError::Config(msg),
            other => CliError::Compute(other.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
