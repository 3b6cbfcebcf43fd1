use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Numerics(#[from] crystalflow_core::Error),
}

impl HarnessError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.into(), source }
    }

    /// Process exit status for this error (see the README).
    pub fn exit_code(&self) -> u8 {
        match self {
            HarnessError::ConfigInvalid(_) => 3,
            HarnessError::Io { .. } => 4,
            HarnessError::Numerics(_) => 5,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
