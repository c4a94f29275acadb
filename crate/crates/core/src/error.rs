use thiserror::Error;

/// Errors shared across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("distribution not normalized: pixel ({row},{col}) sums to {sum}")]
    NotNormalized { row: usize, col: usize, sum: f64 },

    #[error("hint sample exhausted: requested {requested} hints but only {available} pixels available in the {k} lowest-entropy clusters")]
    HintShortfall {
        requested: usize,
        available: usize,
        k: usize,
    },

    #[error("non-finite loss at iteration {iteration}: {value}")]
    NonFiniteLoss { iteration: usize, value: f64 },

    #[error("unknown model tag {0:?}")]
    UnknownModel(String),

    #[error("model load failed for {tag:?}: {reason}")]
    ModelLoad { tag: String, reason: String },

    #[error("empty selection: {0}")]
    EmptySelection(String),

    #[error("caption target invalid: {0}")]
    CaptionTarget(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
