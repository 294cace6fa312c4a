use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// Operand shapes disagree.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A configuration value or network spec violates its invariants.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A NaN or infinity surfaced in losses, gradients or inputs.
    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// An API was called out of order, e.g. backward with a stale trace.
    #[error("usage error: {0}")]
    Usage(String),
}

macro_rules! shape_err {
    ($($arg:tt)*) => { $crate::error::Error::Shape(alloc::format!($($arg)*)) };
}
macro_rules! config_err {
    ($($arg:tt)*) => { $crate::error::Error::Config(alloc::format!($($arg)*)) };
}
pub(crate) use config_err;
pub(crate) use shape_err;
