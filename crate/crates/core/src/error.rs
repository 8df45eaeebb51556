use thiserror::Error;

/// Errors produced by the voxseq library.
#[derive(Debug, Error)]
pub enum Error {
    /// A coordinate, index or dimension does not fit the allowed range.
    #[error("range error: {0}")]
    Range(String),

    /// Arguments violate an operation's shape or value contract.
    #[error("contract violation: {0}")]
    Contract(String),

    /// Non-finite values appeared in a computation.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// A binary file could not be decoded.
    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}

pub(crate) fn range(msg: impl Into<String>) -> Error {
    Error::Range(msg.into())
}
