use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("degenerate statistics: {0}")]
    DegenerateStatistics(String),

    #[error("degenerate embedding: row {row} has zero norm before normalization")]
    DegenerateEmbedding { row: usize },

    #[error("invalid camera: {0}")]
    InvalidCamera(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("missing config field `{0}`")]
    MissingField(String),

    #[error("non-finite gradient: {0}")]
    NonFiniteGradient(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("truncated file: {0}")]
    Truncated(String),

    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
