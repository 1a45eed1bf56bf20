use thiserror::Error;

/// Errors raised by measure, metric and construction operations.
#[derive(Debug, Error)]
pub enum Error {
    /// A point or digit lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Conditioning or normalizing on a set of zero mass.
    #[error("conditioning on a null set: {0}")]
    ConditionOnNull(String),

    /// The requested output needs finer resolution than the input carries.
    #[error("resolution exceeded: {0}")]
    ResolutionExceeded(String),

    /// Mismatched dimensions, depths, lengths or word shapes.
    #[error("shape error: {0}")]
    Shape(String),

    /// A measure violates its structural invariants.
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    /// The LP solver failed to certify optimality.
    #[error("solver error: {0}")]
    Solver(String),

    /// The brute-force oracle was asked for an instance it cannot enumerate.
    #[error("oracle too large: {0}")]
    OracleTooLarge(String),

    /// A Monte Carlo construction produced no accepted samples.
    #[error("empty output: {0}")]
    EmptyOutput(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by a violated resolution or depth budget.
    pub fn is_budget(&self) -> bool {
        matches!(self, Error::ResolutionExceeded(_) | Error::Shape(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
