use thiserror::Error;

/// Errors raised by the numerical and combinatorial routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("series constant term {found} is outside the supported branch: {reason}")]
    BadConstantTerm { found: String, reason: &'static str },

    #[error("series division impossible: divisor has zero constant term")]
    DivisionByNonUnit,

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("kernel is singular at x = {x:?}, z = {z}: {reason}")]
    SingularKernel {
        x: Vec<f64>,
        z: String,
        reason: &'static str,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("root tracking failed at x = {x:?}: {reason}")]
    Tracking { x: Vec<f64>, reason: String },

    #[error("quadrature domain error: {0}")]
    QuadratureDomain(String),

    #[error("requested {requested} coefficients but the series is truncated at order {available}")]
    TruncationExceeded { requested: usize, available: usize },

    #[error("exhaustive enumeration refused for n = {n} (limit {limit}); use Monte Carlo sampling instead")]
    EnumerationTooLarge { n: usize, limit: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
