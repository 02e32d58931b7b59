use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("shape {shape:?} holds {expected} elements but {actual} values were supplied")]
    ElementCount {
        shape: Vec<usize>,
        expected: usize,
        actual: usize,
    },
    #[error("shape {0:?} has a zero-size extent")]
    ZeroExtent(Vec<usize>),
    #[error("{op}: dimension mismatch on {axes}: {detail}")]
    Dimension {
        op: &'static str,
        axes: String,
        detail: String,
    },
    #[error("backward requires a scalar root, got shape {0:?}")]
    NonScalarRoot(Vec<usize>),
    #[error("{op}: invalid argument: {detail}")]
    InvalidArgument { op: &'static str, detail: String },
}

impl TensorError {
    pub(crate) fn dim(op: &'static str, axes: impl Into<String>, detail: impl Into<String>) -> Self {
        TensorError::Dimension {
            op,
            axes: axes.into(),
            detail: detail.into(),
        }
    }

    pub(crate) fn arg(op: &'static str, detail: impl Into<String>) -> Self {
        TensorError::InvalidArgument {
            op,
            detail: detail.into(),
        }
    }
}

pub type Result<T, E = TensorError> = std::result::Result<T, E>;
