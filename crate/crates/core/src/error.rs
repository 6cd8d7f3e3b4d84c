use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: left is {left:?}, right is {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is not Hermitian (max asymmetry {0:e})")]
    NotHermitian(f64),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("malformed dataset file {file}: {message} (byte offset {offset})")]
    Truncated {
        file: String,
        offset: u64,
        message: String,
    },

    #[error("invalid label {label} in {file} at record {record}")]
    BadLabel {
        file: String,
        record: usize,
        label: u8,
    },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
