use thiserror::Error;

/// Errors raised by the solvers, the learning substrate, and the harness.
#[derive(Debug, Error)]
pub enum RscError {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("uncertainty radius {0} outside [0, 1]")]
    Radius(f64),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("solver failed to converge: {0}")]
    NoConvergence(String),

    #[error("linear program is infeasible")]
    Infeasible,

    #[error("linear program is unbounded")]
    Unbounded,

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl RscError {
    /// True for errors caused by bad inputs rather than numerical trouble.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            RscError::Shape(_) | RscError::Invalid(_) | RscError::Radius(_) | RscError::Json(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, RscError>;
