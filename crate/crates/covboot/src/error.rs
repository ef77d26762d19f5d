//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by any covboot operation.
#[derive(Debug, Error)]
pub enum Error {
    /// Two objects live on incompatible grids.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    /// An argument violates a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// Data contains a NaN or infinite entry.
    #[error("non-finite value: {0}")]
    NonFinite(String),
    /// On-disk data could not be parsed.
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the CLI: 2 for bad input, 3 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::GridMismatch(_)
            | Error::InvalidArgument(_)
            | Error::NonFinite(_)
            | Error::Parse(_) => 2,
            Error::Io(_) | Error::Json(_) => 3,
        }
    }
}
