use std::path::PathBuf;

use isac_core::IsacError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: invalid JSON: {msg}", path.display())]
    Json { path: PathBuf, msg: String },

    #[error("invalid configuration:\n{}", .0.iter().map(|e| format!("  - {e}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<String>),

    #[error("{}: {msg}", path.display())]
    Csv { path: PathBuf, msg: String },

    #[error("{}: missing artifact {name}", dir.display())]
    MissingArtifact { dir: PathBuf, name: &'static str },

    #[error(transparent)]
    Core(#[from] IsacError),
}

impl CliError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        CliError::Invalid(vec![msg.into()])
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
