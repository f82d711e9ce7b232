use alloc::string::String;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("degenerate state: all singular values vanish")]
    DegenerateState,
    #[error("degenerate retraction: G + xi is singular, shrink the step")]
    DegenerateRetraction,
    #[error("direction is not tangent (residual {0:.3e})")]
    NonTangent(f64),
    #[error("dimension {dim} exceeds the cap {cap}; use a translationally invariant ansatz or fewer layers")]
    DimensionCap { dim: usize, cap: usize },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
