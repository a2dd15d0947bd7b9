use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

/// Command failures, each with its own process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("missing file: {}", .0.display())]
    Missing(PathBuf),

    #[error("schema violation in {}: {reason}", path.display())]
    Schema { path: PathBuf, reason: String },

    #[error("incompatible configuration: {0}")]
    Config(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("pipeline error: {0}")]
    Pipeline(#[from] biodecode::Error),

    #[error("i/o error on {}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Missing(_) => 3,
            Self::Schema { .. } => 4,
            Self::Config(_) => 5,
            Self::Empty(_) => 6,
            Self::Pipeline(_) => 7,
            Self::Io { .. } => 8,
        }
    }

    pub fn category(&self) -> &'static str {
        match self {
            Self::Missing(_) => "missing-file",
            Self::Schema { .. } => "schema",
            Self::Config(_) => "config",
            Self::Empty(_) => "empty-input",
            Self::Pipeline(_) => "pipeline",
            Self::Io { .. } => "io",
        }
    }

    pub fn io(path: &Path, source: io::Error) -> Self {
        if source.kind() == io::ErrorKind::NotFound {
            Self::Missing(path.to_path_buf())
        } else {
            Self::Io { path: path.to_path_buf(), source }
        }
    }

    pub fn schema(path: &Path, reason: impl Into<String>) -> Self {
        Self::Schema { path: path.to_path_buf(), reason: reason.into() }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
