use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("unbound variable `{0}`")]
    UnboundVariable(String),

    #[error("constant placeholder at position {0} has no fitted value")]
    UnfittedConstant(usize),

    #[error("malformed expression: {0}")]
    Malformed(String),

    #[error("constraint violated at position {position}: {reason}")]
    Constraint { position: usize, reason: String },

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("dataset error: {0}")]
    Data(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }
}
