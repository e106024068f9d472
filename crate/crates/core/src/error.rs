use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("symbol {re}{im:+}i is not a constellation point")]
    NotAConstellationPoint { re: f64, im: f64 },

    #[error("row has no nonzero entry, user cannot be identified")]
    Unidentifiable,

    #[error("BiG-AMP diverged at iteration {iter}")]
    Diverged { iter: usize },

    #[error("instance too large for exhaustive search: {0}")]
    TooLarge(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
