use thiserror::Error;

/// Errors raised by the numerical core and the samplers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A factorization or solve broke down. `pivot` is the offending
    /// row/column index when one is known.
    #[error("numerical error: {message}{}", pivot.map(|p| format!(" (pivot {p})")).unwrap_or_default())]
    Numerical {
        message: String,
        pivot: Option<usize>,
    },

    /// The particle population collapsed and could not be recovered.
    #[error("degenerate particle system: {0}")]
    Degeneracy(String),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical {
            message: msg.into(),
            pivot: None,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
