//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on an operation's inputs was violated.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A serialized stream is malformed (bad magic, version, or layout).
    #[error("stream format error: {0}")]
    Format(String),

    /// A stream was cut mid-segment. `usable_width` is the greatest width
    /// whose segments are all complete, or `None` if even the base segment
    /// is incomplete.
    #[error("partial stream: greatest usable width is {}", usable_width.map_or("none".to_string(), |w| w.to_string()))]
    PartialStream { usable_width: Option<u32> },

    /// A non-finite value showed up where only finite values are allowed
    /// (training loss, gradients).
    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
