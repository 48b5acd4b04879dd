//! Error type shared by every module of the crate.

use thiserror::Error;

/// Failure modes of the numerical pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum QnlsError {
    /// Invalid user input (counts, ranges, malformed specs).
    #[error("configuration error: {0}")]
    Config(String),

    /// An iterative solver ran out of iterations.
    #[error("{what} did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence {
        what: String,
        iterations: usize,
        residual: f64,
    },

    /// A standing assumption of the asymptotic analysis does not hold
    /// (root counts, root ordering, phase consistency).
    #[error("assumption violated: {0}")]
    Assumption(String),

    /// Argument outside the supported domain of a function.
    #[error("domain error: {0}")]
    Domain(String),

    /// Requested evaluation cannot be performed to the promised accuracy.
    #[error("accuracy error: {0}")]
    Accuracy(String),

    /// Non-finite intermediate value.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// Division by zero, pole or singular matrix.
    #[error("singular: {0}")]
    Singular(String),

    /// A logarithm branch could not be followed continuously.
    #[error("branch error: {0}")]
    Branch(String),

    /// A discretization is too coarse for the oscillation it must resolve.
    #[error("resolution error: {0}")]
    Resolution(String),
}

impl QnlsError {
    /// Process exit code used by the command line front-end.
    pub fn exit_code(&self) -> i32 {
        match self {
            QnlsError::Config(_) | QnlsError::Domain(_) => 2,
            QnlsError::NonConvergence { .. }
            | QnlsError::Accuracy(_)
            | QnlsError::Numerical(_)
            | QnlsError::Resolution(_) => 3,
            QnlsError::Assumption(_) | QnlsError::Singular(_) | QnlsError::Branch(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, QnlsError>;
