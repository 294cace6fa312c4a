use std::io;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Io(#[from] io::Error),

    /// Bytes do not follow the expected file layout.
    #[error("format error: {0}")]
    Format(String),

    /// Headers or sections disagree with each other.
    #[error("consistency error: {0}")]
    Consistency(String),

    #[error(transparent)]
    Core(#[from] uth_core::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}
