use thiserror::Error;

/// Failure classes shared by every module of the crate.
///
/// The CLI maps these onto its exit-code taxonomy, so the split between
/// `Infeasible` and `Resource` matters beyond reporting.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("infeasible parameters: {0}")]
    Infeasible(String),
    #[error("resource guard exceeded: {0}")]
    Resource(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("missing certificate: {0}")]
    Certification(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
