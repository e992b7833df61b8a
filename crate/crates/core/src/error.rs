use thiserror::Error;

/// Errors produced across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid size: {0}")]
    InvalidSize(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("capacity exceeded: {n_spins} spins requested, cap is {cap}")]
    Capacity { n_spins: usize, cap: usize },

    #[error("topology error: {0}")]
    Topology(String),

    #[error("singular contraction: {0}")]
    SingularContraction(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid plan: {0}")]
    InvalidPlan(String),

    #[error("missing cells: {}", .0.join(", "))]
    MissingCells(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}
