use thiserror::Error;

/// Errors raised across the lab. Each variant names the failing contract.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("goal is unsatisfiable: both branch values are zero")]
    Unsatisfiable,

    #[error("row {row} is not stochastic (sum = {sum})")]
    NotStochastic { row: String, sum: f64 },

    #[error("malformed table: {0}")]
    Shape(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("history has zero probability")]
    ZeroProbability,

    #[error("resource cap exceeded: {what} = {requested} > {cap}")]
    CapExceeded {
        what: &'static str,
        requested: usize,
        cap: usize,
    },

    #[error("abduction failed: {0}")]
    Abduction(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("matrix is singular (smallest pivot {pivot:.3e}, tolerance {tolerance:.3e}, condition estimate {condition:.3e})")]
    Singular {
        pivot: f64,
        tolerance: f64,
        condition: f64,
    },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for LabError {
    fn from(e: std::io::Error) -> Self {
        LabError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for LabError {
    fn from(e: serde_json::Error) -> Self {
        LabError::Config(e.to_string())
    }
}

impl From<csv::Error> for LabError {
    fn from(e: csv::Error) -> Self {
        LabError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, LabError>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(LabError::Domain(msg.into()))
}
