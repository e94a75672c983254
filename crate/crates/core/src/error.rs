use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid input `{param}`: {reason}")]
    InvalidInput { param: &'static str, reason: String },

    #[error("no discernible splitting between {lower} and {upper}: finite-time gap {gap:.4} below {tolerance}")]
    NoSplitting {
        lower: String,
        upper: String,
        gap: f64,
        tolerance: f64,
    },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("horizon m = {horizon} too small: one-step product {ratio:.6} >= {target} at point {point:?}")]
    HorizonTooSmall {
        horizon: usize,
        ratio: f64,
        target: f64,
        point: Vec<f64>,
    },

    #[error("unsupported system `{system}`: {reason}")]
    Unsupported { system: String, reason: String },

    #[error("ill-conditioned plaque intersection (smallest singular value {0:.3e})")]
    IllConditioned(f64),

    #[error("unknown system `{0}`")]
    UnknownSystem(String),
}

pub type Result<T> = std::result::Result<T, DynError>;

pub(crate) fn invalid(param: &'static str, reason: impl Into<String>) -> DynError {
    DynError::InvalidInput {
        param,
        reason: reason.into(),
    }
}
