use thiserror::Error;

pub type Result<T> = std::result::Result<T, LapError>;

#[derive(Debug, Error)]
pub enum LapError {
    #[error("parameter out of domain: {0}")]
    Domain(String),

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("infeasible input: {0}")]
    Infeasible(String),

    #[error("inputs out of order: {0}")]
    Ordering(String),

    #[error("inconsistent answers: {message} (residuals {residuals:?})")]
    Inconsistent { message: String, residuals: Vec<f64> },

    #[error("elicited correlations are globally incoherent; non positive definite minors: {minors:?}")]
    GlobalIncoherence { minors: Vec<Vec<usize>> },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("data ingestion error: {message}")]
    Ingestion { message: String, rows: Vec<usize> },

    #[error("no finite initial point found after {attempts} jittered attempts")]
    Initialization { attempts: usize },

    #[error("adaptation failed: every warmup proposal in chain {chain} was rejected")]
    Adaptation { chain: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl LapError {
    /// True when the error was caused by the caller's input rather than a
    /// numerical breakdown.
    pub fn is_input_error(&self) -> bool {
        !matches!(
            self,
            LapError::Numerical(_)
                | LapError::Initialization { .. }
                | LapError::Adaptation { .. }
                | LapError::Io(_)
        )
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        LapError::Domain(msg.into())
    }
}
