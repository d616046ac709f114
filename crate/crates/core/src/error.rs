use thiserror::Error;

/// Errors produced across the field, training, guidance and extraction stages.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("checkpoint format error: {0}")]
    Format(String),

    #[error("image error: {0}")]
    Image(String),

    #[error("guidance failure: {0}")]
    Guidance(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("missing forward cache: {0}")]
    MissingCache(String),

    #[error("unavailable initialization source: {0}")]
    UnavailableSource(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
