use thiserror::Error;

use crate::artifact::ArtifactError;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    /// I/O failures, corrupt files and data errors.
    pub const FAILURE: i32 = 1;
    /// Invalid flags, config files or requested ranges.
    pub const CONFIG: i32 = 2;
    pub const MISSING_ARTIFACT: i32 = 3;
    pub const DIVERGENCE: i32 = 4;
    pub const GRADCHECK: i32 = 5;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Missing(String),
    #[error("{0}")]
    Range(String),
    #[error("gradient check failed: {0}")]
    Gradcheck(String),
    #[error(transparent)]
    Artifact(#[from] ArtifactError),
    #[error(transparent)]
    Core(#[from] evacflow::Error),
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Range(_) => exit::CONFIG,
            CliError::Missing(_) | CliError::Artifact(ArtifactError::Missing(_)) => exit::MISSING_ARTIFACT,
            CliError::Artifact(ArtifactError::DataMismatch { .. }) => exit::CONFIG,
            CliError::Gradcheck(_) => exit::GRADCHECK,
            CliError::Core(evacflow::Error::Divergence { .. }) => exit::DIVERGENCE,
            CliError::Core(evacflow::Error::Config(_)) => exit::CONFIG,
            _ => exit::FAILURE,
        }
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
