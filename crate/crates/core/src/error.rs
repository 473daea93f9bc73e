use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("non-finite input at {0}")]
    NonFinite(&'static str),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("unsupported checkpoint version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("truncated file: {0}")]
    Truncated(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("unstable simulation: {0}")]
    Unstable(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

pub(crate) fn shape(expected: impl ToString, got: impl ToString) -> Error {
    Error::ShapeMismatch {
        expected: expected.to_string(),
        got: got.to_string(),
    }
}
