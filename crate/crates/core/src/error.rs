use thiserror::Error;

/// Errors raised by the estimation, simulation and graph routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("column `{label}` (index {index}) is constant")]
    ConstantColumn { label: String, index: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("graph error: {0}")]
    Graph(String),

    #[error("candidate frontier of {size} sets at level {level} exceeds the cap of {cap}")]
    FrontierCap { level: usize, size: usize, cap: usize },

    #[error("sampler acceptance rate {rate:.2e} is below {min:.0e}")]
    LowAcceptance { rate: f64, min: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
