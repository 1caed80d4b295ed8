use std::path::PathBuf;

/// Errors raised by the navigation library.
#[derive(Debug, thiserror::Error)]
pub enum NavError {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("timestamp {next} does not advance past {prev}")]
    NonIncreasingTime { prev: f64, next: f64 },

    #[error("pitch {pitch} rad is too close to ±π/2 for an Euler parameterization")]
    GimbalLock { pitch: f64 },

    #[error("innovation covariance is not positive definite ({0})")]
    SingularInnovation(&'static str),

    #[error("noise density {name} is negative ({value})")]
    NegativeDensity { name: &'static str, value: f64 },

    #[error("matrix {0} is not symmetric positive semidefinite")]
    NotPsd(&'static str),

    #[error("constraint set is infeasible")]
    Infeasible,

    #[error("quadratic program did not converge within {0} iterations")]
    MaxIterations(usize),

    #[error("invalid bounds: {0}")]
    InvalidBounds(String),

    #[error("invalid constraint set: {0}")]
    InvalidConstraints(String),

    #[error("branch attitudes differ by {deg:.2} deg, too far apart to fuse on Euler angles")]
    AttitudeDivergence { deg: f64 },

    #[error("variance of slot {slot} is not strictly positive ({value})")]
    NonPositiveVariance { slot: usize, value: f64 },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("invalid experiment: {0}")]
    InvalidSpec(String),

    #[error("invalid log: {0}")]
    InvalidLog(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl NavError {
    /// Short machine-readable tag, used by the CLI error report.
    pub fn kind(&self) -> &'static str {
        match self {
            NavError::NonFinite(_) => "non_finite",
            NavError::NonIncreasingTime { .. } => "non_increasing_time",
            NavError::GimbalLock { .. } => "gimbal_lock",
            NavError::SingularInnovation(_) => "singular_innovation",
            NavError::NegativeDensity { .. } => "negative_density",
            NavError::NotPsd(_) => "not_psd",
            NavError::Infeasible => "infeasible",
            NavError::MaxIterations(_) => "max_iterations",
            NavError::InvalidBounds(_) => "invalid_bounds",
            NavError::InvalidConstraints(_) => "invalid_constraints",
            NavError::AttitudeDivergence { .. } => "attitude_divergence",
            NavError::NonPositiveVariance { .. } => "non_positive_variance",
            NavError::LengthMismatch { .. } => "length_mismatch",
            NavError::InvalidSpec(_) => "invalid_spec",
            NavError::InvalidLog(_) => "invalid_log",
            NavError::Io { .. } => "io",
            NavError::Csv(_) => "csv",
            NavError::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, NavError>;
