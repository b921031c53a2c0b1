use thiserror::Error;

/// Crate-wide error type.
#[derive(Error, Debug)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error(
        "restart budget exhausted after {restarts} restarts \
         ({proposals_seen} proposals, 0 accepted)"
    )]
    RestartBudgetExhausted {
        restarts: usize,
        proposals_seen: usize,
    },

    #[error("max_draws ({max_draws}) exceeded without an accepted sample")]
    MaxDrawsExceeded { max_draws: usize },

    #[error("config error at `{field}`: {message}")]
    Config { field: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
