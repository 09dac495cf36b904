use thiserror::Error;

/// Errors produced by this crate.
///
/// Variants split into two families the CLI maps onto exit codes:
/// input/validation problems and numerical failures.
#[derive(Debug, Error)]
pub enum StcsError {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("ill-conditioned measurement operator: {0}")]
    IllConditioned(String),

    #[error("singular system: {0}; a larger lambda may help")]
    SingularSystem(String),

    #[error("divergence at iteration {iteration}: {detail}")]
    Divergence { iteration: usize, detail: String },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl StcsError {
    /// True for failures of the numerics (as opposed to bad input or I/O).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            StcsError::IllConditioned(_)
                | StcsError::SingularSystem(_)
                | StcsError::Divergence { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, StcsError>;
