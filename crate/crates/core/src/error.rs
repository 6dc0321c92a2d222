use alloc::boxed::Box;
use alloc::string::String;

/// Errors raised by every module of the crate.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// An input violated a documented precondition.
    #[error("validation error: {0}")]
    Validation(String),
    /// A computation produced a non-finite or out-of-range value.
    #[error("numeric error: {0}")]
    Numeric(String),
    /// An object was used in a state that does not allow the operation.
    #[error("state error: {0}")]
    State(String),
    /// An error raised while training or querying one ensemble member.
    #[error("ensemble member {member}: {source}")]
    Member {
        member: usize,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = core::result::Result<T, Error>;

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub(crate) fn state(msg: impl Into<String>) -> Self {
        Error::State(msg.into())
    }

    pub(crate) fn in_member(self, member: usize) -> Self {
        Error::Member {
            member,
            source: Box::new(self),
        }
    }
}
