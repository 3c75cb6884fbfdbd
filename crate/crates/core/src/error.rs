use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("invalid spectral band [{lo}, {hi}]: need 0 < lo <= hi")]
    InvalidBand { lo: f64, hi: f64 },

    #[error("invalid step size {0}: must be positive")]
    InvalidStep(f64),

    #[error("sample index {index} out of range for {len} samples")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("divergence detected at iteration {iteration}: objective {value:e}")]
    DivergenceDetected { iteration: usize, value: f64 },

    #[error("loss family not supported: {0}")]
    UnsupportedLoss(String),

    #[error("bound is vacuous: rho = {rho} >= 1")]
    VacuousBound { rho: f64 },

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("input contains no samples")]
    EmptyFile,

    #[error("optimum oracle failed: certificate {certificate:e} after {iterations} iterations")]
    OracleFailed { certificate: f64, iterations: usize },

    #[error("not enough usable records to fit a rate: {usable} (need {required})")]
    InsufficientData { usable: usize, required: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
