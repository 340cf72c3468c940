use thiserror::Error;

/// Errors produced by the library.
///
/// The three variants map onto the CLI exit-code contract: argument and
/// data problems are usage errors (exit 2), numeric failures are exit 3.
#[derive(Debug, Error)]
pub enum Error {
    /// Input data violates a precondition (non-finite values, bad shape, ...).
    #[error("invalid data: {0}")]
    InvalidData(String),

    /// An argument is out of range or inconsistent with the data.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A numeric routine failed (non-convergence, singular matrix, ...).
    #[error("numeric failure: {0}")]
    Numeric(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid_data(msg: impl Into<String>) -> Self {
        Error::InvalidData(msg.into())
    }

    pub fn invalid_argument(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }
}
