use thiserror::Error;

/// Failures of a command, grouped by exit code.
#[derive(Debug, Error)]
pub enum LabError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("{0} bound violation(s)")]
    Violation(usize),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl LabError {
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Numerical(_) => 3,
            LabError::Violation(_) => 4,
            _ => 2,
        }
    }
}

impl From<shufflelab_core::Error> for LabError {
    fn from(e: shufflelab_core::Error) -> Self {
        use shufflelab_core::Error as E;
        match e {
            E::NonFinite { .. } => LabError::Numerical(e.to_string()),
            E::BoundViolated { .. } => LabError::Violation(1),
            other => LabError::Config(other.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
