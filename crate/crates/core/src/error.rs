use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in {what} at index {index}")]
    NonFinite { what: &'static str, index: usize },

    #[error(
        "kernel density underflow at anchor {index} (q = {value:e}); lengthscale {eps:e} is too small"
    )]
    IllConditionedBandwidth { index: usize, value: f64, eps: f64 },

    #[error("query point is too far from every anchor (density {value:e} below 1e-300)")]
    IllConditionedQuery { value: f64 },

    #[error("linear solve failed for lambda_reg = {lambda:e}: {reason}; try a larger lambda_reg")]
    Solver { lambda: f64, reason: String },

    #[error("eigensolver failed on {size}x{size} matrix: {reason}")]
    Eigen { size: usize, reason: String },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("integration blew up at step {step}")]
    BlowUp { step: usize },

    #[error("no viable model: all {trials} trials diverged or failed")]
    NoViableModel {
        trials: usize,
        records: Vec<crate::validation::SearchRecord>,
    },

    #[error("bad container: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
