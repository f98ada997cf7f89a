use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum MfbmError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("inadmissible parameters: {}", .violations.join("; "))]
    Inadmissible {
        min_eigenvalue: f64,
        violations: Vec<String>,
    },

    #[error("unsupported case: {0}")]
    Unsupported(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("singular regression: {0}")]
    SingularRegression(String),

    #[error("degenerate filter: {0}")]
    DegenerateFilter(String),

    #[error("unknown filter `{0}`")]
    UnknownFilter(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("format error: {0}")]
    Format(String),
}

impl From<serde_json::Error> for MfbmError {
    fn from(e: serde_json::Error) -> Self {
        MfbmError::Format(e.to_string())
    }
}

impl From<csv::Error> for MfbmError {
    fn from(e: csv::Error) -> Self {
        MfbmError::Format(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, MfbmError>;
