use thiserror::Error;

/// Errors raised by fitting, process construction, and calibration.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("marks do not straddle zero: all nonzero marks share one sign")]
    HullViolation,

    #[error("{what} did not converge within {iterations} iterations")]
    NonConvergence { what: &'static str, iterations: usize },

    #[error("singular {0}")]
    Singular(&'static str),

    #[error("zero sample variance of the covariate")]
    ZeroVariance,

    #[error("separation detected in logistic fit (coefficients diverge)")]
    Separation,

    #[error("pivot {pivot} leaves fewer than 2 observations on one side of coordinate {coordinate}")]
    PivotSide { coordinate: usize, pivot: f64 },

    #[error("{excluded} of {n} observations fall below the density floor (limit 20%)")]
    TooManyExcluded { excluded: usize, n: usize },

    #[error("every grid point has zero variance estimate; nothing to calibrate")]
    AllDegenerateVariance,

    #[error("{failed} of {total} {what} failed, above the {limit_pct}% limit")]
    TooManyFailures {
        what: &'static str,
        failed: usize,
        total: usize,
        limit_pct: f64,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
