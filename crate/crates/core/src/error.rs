use std::path::PathBuf;

use mtsr_tensor::TensorError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MtsrError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: u64, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("checkpoint format error: {0}")]
    Format(String),
    #[error("checkpoint version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("checkpoint truncated: {0}")]
    Truncated(String),
    #[error("checkpoint manifest mismatch: {0}")]
    Manifest(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("empty {0}")]
    Empty(&'static str),
}

impl MtsrError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        MtsrError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = MtsrError> = std::result::Result<T, E>;
