use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("objective is unbounded below: linear term has a component of norm {kernel_norm:e} in ker(A)")]
    UnboundedBelow { kernel_norm: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("roots are nearly repeated (relative separation {separation:e}); use the recurrence")]
    NearlyRepeatedRoots { separation: f64 },

    #[error("root finder did not converge (scaled residual {residual:e})")]
    NoConvergence { residual: f64 },

    #[error("partial-fraction sum left an imaginary residue of {0:e}")]
    ImaginaryResidue(f64),

    #[error("dominant reciprocal root {value} outside bracket ({lo}, {hi}]")]
    BracketViolation { value: f64, lo: f64, hi: f64 },

    #[error("precondition violated: {0}")]
    PreconditionViolated(String),

    #[error("dimension {d} too small: need at least {required}")]
    DimensionTooSmall { d: usize, required: usize },

    #[error("run budget exceeded: {0}")]
    BudgetExceeded(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Errors caused by the caller's inputs, as opposed to internal failures.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::DimensionMismatch { .. }
                | Error::UnboundedBelow { .. }
                | Error::InvalidParameter(_)
                | Error::NearlyRepeatedRoots { .. }
                | Error::PreconditionViolated(_)
                | Error::DimensionTooSmall { .. }
                | Error::BudgetExceeded(_)
        )
    }
}
