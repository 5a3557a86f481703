use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Malformed input: bad parameters, paths or configuration values.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Parameters outside the domain where a formula or steady state exists.
    #[error("domain error: {0}")]
    Domain(String),

    /// A non-finite value appeared while integrating.
    #[error("numerical failure at step {step}: {what}")]
    Numerical { step: u64, what: String },
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
