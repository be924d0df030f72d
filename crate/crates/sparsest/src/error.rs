use thiserror::Error;

/// Crate-wide error type.
///
/// Variants are grouped by failure class so callers (the CLI in particular)
/// can map them onto exit codes without inspecting messages.
#[derive(Debug, Error)]
pub enum Error {
    /// Dimension or structural mismatch between operands.
    #[error("shape error: {0}")]
    Shape(String),

    /// Malformed or inconsistent data (files, configs, label sets).
    #[error("data error: {0}")]
    Data(String),

    /// Numerical failure: divergence, non-finite values, factorization
    /// breakdown.
    #[error("numerical error: {0}")]
    Numeric(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }
}
