use thiserror::Error;

/// Errors raised by model construction, operators and solvers.
#[derive(Debug, Error)]
pub enum MfgError {
    #[error("dimension mismatch in {what}: expected {expected}, got {actual}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("temperature must be positive, got {0}")]
    NonPositiveTemperature(f64),
    #[error("{what} is not a probability vector (sum {sum}, min {min})")]
    NotADistribution { what: String, sum: f64, min: f64 },
    #[error("window out of range: start {t_start} with horizon {horizon}")]
    WindowOutOfRange { t_start: usize, horizon: usize },
    #[error("invalid configuration field `{field}`: {reason}")]
    InvalidConfig { field: &'static str, reason: String },
    #[error("policy ensemble is not chained at start time {t_start} (deviation {deviation})")]
    InconsistentEnsemble { t_start: usize, deviation: f64 },
    #[error("time index {0} is not covered by the ensemble")]
    UncoveredTime(usize),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("parse error at line {line}, field `{field}`: {message}")]
    Parse {
        line: usize,
        field: String,
        message: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, MfgError>;
