use thiserror::Error;

/// Errors raised across the forward model, the estimators and the dataset IO.
#[derive(Debug, Error)]
pub enum Error {
    #[error("inner series has nonzero constant term {0}")]
    NonzeroConstantTerm(f64),

    #[error("derivative of order {k} exceeds series order {order}")]
    OrderTooSmall { k: usize, order: usize },

    #[error("series is not revertible: {0}")]
    NotRevertible(String),

    #[error("zero conditioning mass: {0}")]
    ZeroConditioningMass(String),

    #[error("tail too heavy: {0}")]
    TailTooHeavy(String),

    #[error("sequence has infinite support (declared tail mass {0:e})")]
    InfiniteSupport(f64),

    #[error("invalid continuation path: {0}")]
    InvalidPath(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("format error at line {line}: {msg}")]
    Format { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
