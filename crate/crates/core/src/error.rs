use thiserror::Error;

/// Errors raised by samplers, integrators and verifiers.
#[derive(Debug, Error)]
pub enum WettingError {
    #[error("grid mismatch: resolution {resolution} is not a positive multiple of {n} sites")]
    GridMismatch { resolution: usize, n: usize },

    #[error("negative height {value} at site {site}")]
    NegativeHeight { site: usize, value: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("singular input: {0}")]
    Singular(String),

    #[error("stability condition violated: {0}")]
    Unstable(String),

    #[error("empty sample")]
    EmptySample,

    #[error("effective sample size {ess:.1} below the required {required}")]
    LowEffectiveSampleSize { ess: f64, required: f64 },

    #[error("quadrature did not converge on [{lo}, {hi}] (estimated error {error:e})")]
    Quadrature { lo: f64, hi: f64, error: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = WettingError> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> WettingError {
    WettingError::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
