use thiserror::Error;

/// Errors produced by objectives, solvers and optimizer runs.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("cholesky factorization failed at pivot {pivot} (value {value:e})")]
    Factorization { pivot: usize, value: f64 },

    #[error("conjugate residuals exceeded {cap} iterations (last residual {residual:e})")]
    IterationBudget { cap: usize, residual: f64 },

    #[error("regularization search did not converge: lambda reached {lambda:e}")]
    NonConvergence { lambda: f64 },

    #[error("bisection failed: {0}")]
    Bisection(String),

    #[error("iterates diverged at step {step}: {reason}")]
    Divergence { step: usize, reason: String },

    #[error("audit input error: {0}")]
    AuditInput(String),

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
