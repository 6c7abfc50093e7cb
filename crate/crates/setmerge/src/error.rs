use thiserror::Error;

/// Errors shared by all modules of the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument fell outside its mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Interval and label sets cannot be mixed in one operation.
    #[error("kind mismatch: {0}")]
    KindMismatch(String),

    /// Inputs are structurally valid but semantically inconsistent.
    #[error("validation error: {0}")]
    Validation(String),

    /// A method, score, or calibrator id is not in the registry.
    #[error("unknown id: {0}")]
    UnknownId(String),
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
}
