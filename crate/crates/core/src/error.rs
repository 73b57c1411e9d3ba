use thiserror::Error;

/// Errors produced by the field, voting, supervision and training layers.
#[derive(Debug, Error)]
pub enum MdnError {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("non-finite value at flat index {index}")]
    NonFinite { index: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("channel {channel} out of range for a field with {channels} channels")]
    ChannelRange { channel: usize, channels: usize },

    #[error("size error: {0}")]
    Size(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("context mismatch: {0}")]
    Context(String),

    #[error("diagnostic failure: {0}")]
    Diagnostic(String),

    #[error("argument `{argument}`: {message}")]
    Boundary { argument: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, MdnError>;
