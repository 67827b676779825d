use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = IsacError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum IsacError {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("singular FIM for target {target}: det = {det:e}")]
    SingularFim { target: usize, det: f64 },

    #[error("degenerate retraction: z + step * direction has zero norm")]
    DegenerateRetraction,

    #[error("finite-difference oracle produced a non-finite value at coordinate {coord}")]
    OracleNonFinite { coord: usize },

    #[error("{path}:{line}: field `{field}`: {msg}")]
    Parse { path: PathBuf, line: usize, field: String, msg: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl IsacError {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        IsacError::Dimension(msg.into())
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        IsacError::InvalidParameter(msg.into())
    }
}
