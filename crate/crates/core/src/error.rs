use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("numeric failure: {0}")]
    NumericFailure(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("cannot oversample: {0}")]
    CannotOversample(String),
    #[error("oracle failure: {0}")]
    Oracle(String),
    #[error("memory probe unavailable: {0}")]
    ProbeUnavailable(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("corrupt file {path}: {reason}")]
    Corrupt { path: String, reason: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
