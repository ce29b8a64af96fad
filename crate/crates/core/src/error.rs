use thiserror::Error;

/// Errors produced by set construction, file I/O and the numeric kernels.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    Parameter { field: &'static str, reason: String },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("parse error at line {line}, column {column}: {reason}")]
    Parse {
        line: usize,
        column: usize,
        reason: String,
    },

    #[error("{what} of size {size} exceeds the exact-enumeration limit {limit}; {advice}")]
    Capacity {
        what: &'static str,
        size: usize,
        limit: usize,
        advice: &'static str,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn param(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Parameter {
            field,
            reason: reason.into(),
        }
    }

    pub(crate) fn dim_capacity(size: usize, limit: usize) -> Self {
        Error::Capacity {
            what: "dimension",
            size,
            limit,
            advice: "use the Monte Carlo model instead",
        }
    }
}
