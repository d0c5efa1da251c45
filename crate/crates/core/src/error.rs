use thiserror::Error;

/// Every fallible operation in the crate returns this error.
#[derive(Debug, Error)]
pub enum GarsError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("schema violation: {0}")]
    Schema(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("infeasible budget: {0}")]
    Infeasible(String),
    #[error("external learner: {0}")]
    Learner(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl GarsError {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            GarsError::Parse { .. } | GarsError::Schema(_) | GarsError::InvalidInput(_) | GarsError::Io(_) => 2,
            GarsError::Numeric(_) | GarsError::Learner(_) => 3,
            GarsError::Infeasible(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, GarsError>;
