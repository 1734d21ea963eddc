use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("record {id}: {description}")]
    InvariantViolation { id: u64, description: String },
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("switching region has zero probability mass")]
    ZeroMassRegion,
    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn violation(id: u64, description: impl Into<String>) -> Self {
        Error::InvariantViolation {
            id,
            description: description.into(),
        }
    }
}
