use alloc::string::String;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("expected a {expected} tensor")]
    Kind { expected: &'static str },
    #[error("axis {axis} out of range for rank {rank}")]
    Axis { axis: usize, rank: usize },
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("infeasible sampling budget: {0}")]
    Budget(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("autodiff: {0}")]
    Tape(String),
}

pub type Result<T> = core::result::Result<T, Error>;

macro_rules! bail {
    ($variant:ident, $($arg:tt)*) => {
        return Err($crate::error::Error::$variant(alloc::format!($($arg)*)))
    };
}
pub(crate) use bail;
