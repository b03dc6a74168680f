use std::path::PathBuf;

use thiserror::Error;

/// Everything the command-line driver can fail with, grouped by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}:{line}: {msg}")]
    Schema { path: PathBuf, line: usize, msg: String },

    #[error("{0}")]
    Invalid(vistrain_core::Error),

    #[error("{path}: checksum mismatch (stored {stored}, computed {computed})")]
    Checksum { path: PathBuf, stored: String, computed: String },

    #[error("{path}: unsupported schema version {found} (expected {expected})")]
    Version { path: PathBuf, found: u32, expected: u32 },

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{path} is locked by another process")]
    Locked { path: PathBuf },

    #[error("no eligible videos: {0}")]
    NoEligible(String),

    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn schema(path: impl Into<PathBuf>, line: usize, msg: impl ToString) -> Self {
        CliError::Schema { path: path.into(), line, msg: msg.to_string() }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    /// 2 schema or parse, 3 checksum, 4 I/O, 5 nothing to sample, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Schema { .. } | CliError::Invalid(_) | CliError::Version { .. } => 2,
            CliError::Checksum { .. } => 3,
            CliError::Io { .. } | CliError::Locked { .. } => 4,
            CliError::NoEligible(_) => 5,
            CliError::Usage(_) => 1,
        }
    }
}

impl From<vistrain_core::Error> for CliError {
    fn from(e: vistrain_core::Error) -> Self {
        match e {
            vistrain_core::Error::NoEligibleVideos(source) => CliError::NoEligible(format!("{source} pool is empty")),
            other => CliError::Invalid(other),
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
