use thiserror::Error;

/// Errors raised by the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter violated its documented precondition.
    #[error("invalid argument: {0}")]
    Argument(String),
    /// The domain (mask, sub-mask, bins) is empty or too small for the request.
    #[error("domain error: {0}")]
    Domain(String),
    /// A sampling rule produced a non-finite value on an active cell.
    #[error("sampling error at cell ({i}, {j}, {k}) x = {point:?}: {reason}")]
    Sampling {
        i: usize,
        j: usize,
        k: usize,
        point: [f64; 3],
        reason: String,
    },
    /// A regression could not be performed.
    #[error("fit error: {0}")]
    Fit(String),
    /// A construction failed its verification oracle.
    #[error("oracle rejected construction: {0}")]
    Oracle(String),
    #[error("malformed field file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn arg<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Argument(msg.into()))
}

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
