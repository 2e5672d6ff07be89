use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Inconsistent shapes, horizons or parameter ranges.
    #[error("configuration error: {0}")]
    Config(String),

    /// An exhaustive search would enumerate more candidates than allowed.
    #[error("search space of {size} candidates exceeds the exhaustive budget of {budget}")]
    SearchBudget { size: u128, budget: u64 },

    /// Input data violating a documented invariant.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A linear-algebra routine failed where it should not.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Malformed structured text.
    #[error("parse error at {path}: {message}")]
    Parse { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
