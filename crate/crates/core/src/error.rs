use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("momentum {value} out of range: expected {lo} <= p < {hi}")]
    MomentumRange { value: i64, lo: i64, hi: i64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPositive { min_eigenvalue: f64 },

    #[error("invalid density matrix: {0}")]
    InvalidDensity(String),

    #[error("unphysical relaxation times: T2 = {t2:e} exceeds 2*T1 = {two_t1:e}")]
    Physicality { t2: f64, two_t1: f64 },

    #[error("integrator step failed: estimated error {achieved:e} exceeds tolerance {tolerance:e}")]
    Integrator { achieved: f64, tolerance: f64 },

    #[error("circuit on {n} qubits exceeds the dense-construction limit of {limit}")]
    TooManyQubits { n: usize, limit: usize },

    #[error("degenerate series: {0}")]
    DegenerateSeries(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("non-positive value {value:e} at t = {t} cannot be log-transformed")]
    NonPositiveLog { t: f64, value: f64 },

    #[error("fit did not converge after {iterations} iterations (best rss {rss:e})")]
    NoConvergence { iterations: usize, rss: f64 },

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
