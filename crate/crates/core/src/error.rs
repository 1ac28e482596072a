use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// A numeric or structural parameter is outside its domain.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Inputs are individually valid but inconsistent with each other.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Exact enumeration would exceed the configured budget.
    #[error("enumeration of {required} outcomes exceeds the budget of {budget}; use the Monte Carlo estimator instead")]
    TooLarge { required: f64, budget: u64 },

    /// A configuration key violates a constraint.
    #[error("config: {key} {constraint}")]
    Config { key: String, constraint: String },

    #[error("config parse error: {0}")]
    ConfigParse(#[from] toml::de::Error),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, constraint: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            constraint: constraint.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
