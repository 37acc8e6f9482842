use thiserror::Error;

/// Errors raised by data generation, nuisance fitting, smoothing and tail analysis.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum AdrfError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("insufficient support: {0}")]
    InsufficientSupport(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("non-finite input: {0}")]
    NonFinite(String),
    #[error("rank-deficient design (condition number {condition:.3e})")]
    RankDeficient { condition: f64 },
    #[error("optimizer failed: {message}")]
    Optimizer {
        message: String,
        /// Starting-point estimate the caller may fall back to.
        fallback: Option<Vec<f64>>,
    },
    #[error("estimation failed: {0}")]
    Estimation(String),
}

pub type Result<T> = std::result::Result<T, AdrfError>;

pub(crate) fn invalid(msg: impl Into<String>) -> AdrfError {
    AdrfError::InvalidParameter(msg.into())
}

pub(crate) fn degenerate(msg: impl Into<String>) -> AdrfError {
    AdrfError::Degenerate(msg.into())
}
