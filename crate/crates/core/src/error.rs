use thiserror::Error;

/// Errors raised by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: `{field}`: {reason}")]
    InvalidConfig { field: String, reason: String },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("matrix is not symmetric (max asymmetry {max_asymmetry:e})")]
    Asymmetric { max_asymmetry: f64 },

    #[error("non-finite value recorded at tape node {node}")]
    NonFinite { node: usize },

    #[error("instrument `{instrument}` cannot be simulated under the {model} model")]
    Incompatible {
        instrument: &'static str,
        model: &'static str,
    },

    #[error("callable instrument requires an exercise policy")]
    MissingPolicy,

    #[error("nested simulation budget exceeded: requires {required} paths, budget is {budget}")]
    BudgetExceeded { required: u64, budget: u64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("row {index}: {source}")]
    Row {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn at_row(self, index: usize) -> Self {
        match self {
            e @ Error::Row { .. } => e,
            e => Error::Row {
                index,
                source: Box::new(e),
            },
        }
    }

    /// True for errors caused by bad user input (configuration or parameters).
    pub fn is_config_error(&self) -> bool {
        match self {
            Error::InvalidConfig { .. }
            | Error::InvalidParameter { .. }
            | Error::DimensionMismatch { .. }
            | Error::Incompatible { .. }
            | Error::MissingPolicy
            | Error::BudgetExceeded { .. }
            | Error::Json(_) => true,
            Error::Row { source, .. } => source.is_config_error(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
