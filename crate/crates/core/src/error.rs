use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// More symbol errors than the code can correct were detected.
    #[error("uncorrectable codeword")]
    DecodeFailure,
    #[error("utilization undefined: no bytes moved on the wire")]
    UndefinedUtilization,
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
