use thiserror::Error;

/// Errors raised by the toolkit.
///
/// The variants follow the failure classes the operations report: bad
/// inputs (`Domain`), floating-point breakdown (`Numeric`), iterative
/// schemes that did not settle (`Convergence`), and cross-checks between
/// independently computed objects that disagree (`Consistency`).
#[derive(Debug, Error)]
pub enum FkError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("convergence error: {message}")]
    Convergence { message: String, history: Vec<f64> },

    #[error("consistency error: {0}")]
    Consistency(String),

    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(String),
}

impl FkError {
    pub fn domain(msg: impl Into<String>) -> Self {
        FkError::Domain(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        FkError::Numeric(msg.into())
    }

    pub fn consistency(msg: impl Into<String>) -> Self {
        FkError::Consistency(msg.into())
    }

    pub fn config(field: impl Into<String>, msg: impl Into<String>) -> Self {
        FkError::Config {
            field: field.into(),
            message: msg.into(),
        }
    }

    /// Process exit code used by the CLI: 2 for configuration problems,
    /// 1 for everything detected while computing.
    pub fn exit_code(&self) -> i32 {
        match self {
            FkError::Config { .. } => 2,
            _ => 1,
        }
    }
}

impl From<serde_json::Error> for FkError {
    fn from(e: serde_json::Error) -> Self {
        FkError::Serde(e.to_string())
    }
}

impl From<csv::Error> for FkError {
    fn from(e: csv::Error) -> Self {
        FkError::Serde(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, FkError>;
