use thiserror::Error;

/// Errors raised by configuration validation and analysis routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A parameter violates its documented domain.
    #[error("invalid `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// A bound or oracle was evaluated outside the range where it holds.
    #[error("`{name}` = {value} is outside the domain {domain}")]
    OutOfDomain {
        name: &'static str,
        value: f64,
        domain: &'static str,
    },

    /// The operation has no meaning for the given scenario.
    #[error("not applicable: {0}")]
    NotApplicable(&'static str),

    /// Record output failed.
    #[error("record output failed: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// Name of the offending parameter, when the error is tied to one.
    pub fn parameter(&self) -> Option<&'static str> {
        match self {
            Error::InvalidParameter { name, .. } | Error::OutOfDomain { name, .. } => Some(name),
            _ => None,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
