use thiserror::Error;

/// Errors produced by the arithmetic, analytic and pipeline layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("division by zero in Z[w]")]
    DivisionByZero,

    #[error("gcd(0, 0) is undefined")]
    GcdUndefined,

    #[error("{0} is divisible by 1-w and has no primary associate")]
    NotNormalizable(String),

    #[error("modulus {0} is not a prime of Z[w]")]
    NotPrime(String),

    #[error("factorization of {0} failed")]
    FactorizationFailed(String),

    #[error("pole of {function} at {at}")]
    Pole { function: &'static str, at: String },

    #[error("domain violation in {function}: {detail}")]
    Domain { function: &'static str, detail: String },

    #[error("quadrature did not converge after {subdivisions} subdivisions (error estimate {estimate:e})")]
    QuadratureNonConvergence { subdivisions: usize, estimate: f64 },

    #[error(
        "zero count mismatch for {character}: found {found}, argument principle gives {expected} on |t| <= {height}"
    )]
    ZeroCountMismatch {
        character: String,
        found: usize,
        expected: i64,
        height: f64,
    },

    #[error("imaginary residue {residue:e} of rotated completed L-function at t = {t} exceeds tolerance")]
    RotationResidue { t: f64, residue: f64 },

    #[error("zero-sum tail {tail:e} exceeds the budget {budget:e}; increase the height T")]
    TailBudgetExceeded { tail: f64, budget: f64 },

    #[error("test function provides derivatives up to order {available}, {requested} requested")]
    MissingDerivative { requested: usize, available: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
