use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error(
        "matrix is not positive definite: eigenvalue {eigval:e} is below threshold {threshold:e}"
    )]
    NotPositiveDefinite { eigval: f64, threshold: f64 },

    #[error("Jacobi eigensolver did not converge after {sweeps} sweeps")]
    NoConvergence { sweeps: usize },

    #[error("input {value:?} outside the kernel domain: {reason}")]
    DomainViolation {
        value: Vec<f64>,
        reason: &'static str,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("collapse: squared label norm {norm_sq:e} does not exceed K*epsilon = {threshold:e}; the solution is the zero function")]
    CollapseCondition { norm_sq: f64, threshold: f64 },

    #[error(
        "infeasible: null-space residual {floor:e} alone reaches the loss tolerance {epsilon:e}"
    )]
    Infeasible { floor: f64, epsilon: f64 },

    #[error("bisection did not converge within {iters} iterations")]
    ConvergenceFailure { iters: usize },

    #[error("round {t} out of range (trace has {len} rounds)")]
    OutOfRange { t: usize, len: usize },

    #[error("round {t} is at or after the collapse round")]
    CollapsedRound { t: usize },

    #[error("precondition violated: {0}")]
    PreconditionViolation(String),

    #[error("degenerate spectrum: adjacent eigenvalues {lo:e} and {hi:e} coincide")]
    DegenerateSpectrum { lo: f64, hi: f64 },

    #[error("no tolerance reproduces training error {target:e}: {reason}")]
    MatchFailure { target: f64, reason: String },

    #[error("bad config: {0}")]
    BadConfig(String),

    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: &std::path::Path, err: impl std::fmt::Display) -> Self {
        Error::Io {
            path: path.display().to_string(),
            message: err.to_string(),
        }
    }
}
