//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Matrix or sequence dimensions do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Caller violated a documented precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A computation produced NaN or infinity where a finite value is required.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// A file does not follow its documented format.
    #[error("malformed file: {0}")]
    Format(String),

    /// Training loss stopped being finite.
    #[error("training diverged at step {step}: {msg}")]
    Diverged { step: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
