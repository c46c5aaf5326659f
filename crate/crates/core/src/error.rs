use alloc::string::String;

/// Errors raised by path algebra, model construction and the limit solvers.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("{what} out of domain: {detail}")]
    Domain { what: &'static str, detail: String },
    /// An input path violates a structural requirement (monotonicity, ordering).
    #[error("contract violation: {0}")]
    Contract(String),
    /// The requested construction does not apply to this model.
    #[error("unsupported construction: {0}")]
    Unsupported(String),
    /// A model parameter is invalid; `field` names the offending parameter.
    #[error("invalid field `{field}`: {reason}")]
    InvalidSpec { field: &'static str, reason: String },
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

pub(crate) fn domain(what: &'static str, detail: impl Into<String>) -> Error {
    Error::Domain {
        what,
        detail: detail.into(),
    }
}

pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidSpec {
        field,
        reason: reason.into(),
    }
}
