use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Malformed input data or configuration.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("missing value at row {row}, column {column}")]
    MissingValue { row: usize, column: usize },

    #[error("ties present among pooled values of hypothesis {hypothesis}; exact Wilcoxon distribution unavailable")]
    Ties { hypothesis: usize },

    /// A test precondition does not hold for the supplied data.
    #[error("test precondition violated: {0}")]
    Precondition(String),

    #[error("enumeration budget exceeded: {needed} items requested, budget is {budget}")]
    BudgetExceeded { needed: u128, budget: u128 },

    #[error("exact arithmetic overflow: {0}")]
    Overflow(String),

    #[error("cannot access {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn precondition(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the data or test assumptions rather than by
    /// malformed input or configuration.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Ties { .. } | Error::Precondition(_) | Error::BudgetExceeded { .. } | Error::Overflow(_)
        )
    }
}
