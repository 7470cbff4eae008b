use thiserror::Error;

/// Errors raised across the solver library.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter block violates its domain invariants.
    #[error("invalid parameter `{field}`: {reason}")]
    Parameter { field: String, reason: String },

    /// Malformed or inconsistent input data.
    #[error("invalid input: {0}")]
    Input(String),

    /// Sample skewness requested on an ensemble with zero spread.
    #[error("skewness undefined: sample standard deviation is zero")]
    SkewnessUndefined,

    /// Division by a zero observed statistic in a relative error.
    #[error("relative error undefined: observed {0} is zero")]
    ZeroObserved(&'static str),

    /// The explicit step violates the positivity (CFL) bound of the low-order scheme.
    #[error("time step {dt} violates the stability bound (CFL number {cfl:.4} > 1)")]
    Stability { dt: f64, cfl: f64 },

    /// A control policy is outside its admissible set or has the wrong shape.
    #[error("invalid control policy: {0}")]
    Policy(String),

    /// Configuration parsing or validation failure.
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn param(field: &str, reason: impl Into<String>) -> Self {
        Error::Parameter {
            field: field.to_string(),
            reason: reason.into(),
        }
    }
}
