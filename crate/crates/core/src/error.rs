//! Library error type and its mapping onto process exit codes.

use crate::C64;

/// Errors raised by the numerical library.
#[derive(Debug, thiserror::Error)]
pub enum VortexError {
    /// Input outside the admissible set (coincident centers, radius too large, ...).
    #[error("domain error: {0}")]
    Domain(String),
    /// A documented precondition of the operation does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),
    /// A linear system or Jacobian is numerically singular.
    #[error("near-singular system: {0}")]
    NearSingular(String),
    /// An iterative solver did not reach its tolerance.
    #[error("no convergence after {iterations} iterations (last residual {last_residual:e})")]
    Convergence {
        iterations: usize,
        last_residual: f64,
        trace: Vec<f64>,
    },
    /// Two point vortices came closer than the integration guard.
    #[error("near collision after {step} steps")]
    NearCollision {
        step: usize,
        partial: Vec<Vec<C64>>,
    },
    /// Malformed or inconsistent user input.
    #[error("invalid input: {0}")]
    Input(String),
    /// An internal consistency check failed.
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl VortexError {
    /// Exit code of the command-line contract: 2 input, 3 convergence, 4 domain, 5 invariant.
    pub fn exit_code(&self) -> i32 {
        match self {
            VortexError::Input(_) | VortexError::Io(_) | VortexError::Json(_) => 2,
            VortexError::Convergence { .. } | VortexError::NearSingular(_) => 3,
            VortexError::NearCollision { .. } => 3,
            VortexError::Domain(_) | VortexError::Precondition(_) => 4,
            VortexError::Invariant(_) => 5,
        }
    }
}

pub type Result<T> = std::result::Result<T, VortexError>;
