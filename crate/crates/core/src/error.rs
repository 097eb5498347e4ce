use thiserror::Error;

#[derive(Debug, Error)]
pub enum PdlaError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("confidence parameter {0} is outside [0, 1]")]
    InvalidLambda(f64),

    #[error("degenerate instance: {0}")]
    Degenerate(String),

    #[error("variant unavailable: {0}")]
    Unavailable(String),

    #[error("integration did not converge in round {round} after {steps} steps")]
    NonConvergence { round: usize, steps: usize },

    #[error("oracle mode not applicable: {0}")]
    OracleLimit(String),

    #[error("subroutine failed in round {round}: {reason}")]
    Subroutine { round: usize, reason: String },

    #[error("certificate failed: {0}")]
    Certificate(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, PdlaError>;
