use thiserror::Error;

/// Errors raised anywhere in the training, attack and evaluation stack.
#[derive(Debug, Error)]
pub enum AmiError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite values in block `{block}`")]
    NonFinite { block: String },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("integrity error: {0}")]
    Integrity(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("pairing error: {0}")]
    Pairing(String),
    #[error("training diverged: {0}")]
    Divergence(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("{path}: {source}")]
    Path {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, AmiError>;

impl AmiError {
    pub(crate) fn path(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        AmiError::Path {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
