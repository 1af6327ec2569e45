use thiserror::Error;

/// Failure classes shared by every module.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn degenerate(msg: impl Into<String>) -> Self {
        Error::DegenerateInput(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::NumericalFailure(msg.into())
    }

    /// Short machine-readable class name, used in run manifests.
    pub fn class(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid-argument",
            Error::DegenerateInput(_) => "degenerate-input",
            Error::NumericalFailure(_) => "numerical-failure",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
