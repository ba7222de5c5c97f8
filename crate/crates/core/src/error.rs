use thiserror::Error;

pub type Result<T, E = ArhmmError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum ArhmmError {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("transition matrix is not ergodic: {0}")]
    NonErgodic(String),

    #[error("fixed-point iteration did not converge after {iterations} iterations (last change {last_change:e})")]
    IterationLimit { iterations: usize, last_change: f64 },

    #[error("numeric underflow at step {step}: all regime densities vanish")]
    Underflow { step: usize },

    #[error("degenerate regime {regime}: {reason}")]
    DegenerateRegime { regime: usize, reason: String },

    #[error("EM log-likelihood decreased at iteration {iteration}: {previous} -> {current}")]
    NonMonotone {
        iteration: usize,
        previous: f64,
        current: f64,
    },

    #[error("unsupported dimension d={0}")]
    UnsupportedDimension(usize),

    #[error("hedging recursion degenerate at t={t}, y={y}, regime={regime}: {reason}")]
    HedgeDegenerate {
        t: usize,
        y: f64,
        regime: usize,
        reason: String,
    },

    #[error("no solution: {0}")]
    NoSolution(String),

    #[error("bootstrap aborted: {dropped} of {total} replicates failed")]
    BootstrapAborted { dropped: usize, total: usize },

    #[error("numeric overflow: {0}")]
    Overflow(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl ArhmmError {
    /// True for errors caused by bad inputs rather than a numerical breakdown.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            ArhmmError::InvalidModel(_)
                | ArhmmError::InvalidInput(_)
                | ArhmmError::NonErgodic(_)
                | ArhmmError::UnsupportedDimension(_)
                | ArhmmError::Io(_)
                | ArhmmError::Json(_)
                | ArhmmError::Csv(_)
        )
    }
}
