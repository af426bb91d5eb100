use alloc::boxed::Box;
use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// Invalid or infeasible configuration.
    #[error("configuration error: {0}")]
    Config(String),
    /// Operands whose dimensions do not line up.
    #[error("shape error: {0}")]
    Shape(String),
    /// Operation called on input it is not defined for (e.g. an empty batch).
    #[error("usage error: {0}")]
    Usage(String),
    /// Malformed IDX data. `file` names the offending input.
    #[error("format error in {file}: {reason}")]
    Format { file: String, reason: String },
    /// A failure inside one client's local update.
    #[error("client {client}: {source}")]
    Client {
        client: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub(crate) fn in_client(self, client: usize) -> Self {
        Error::Client {
            client,
            source: Box::new(self),
        }
    }

    /// True for errors caused by configuration rather than by a failed run.
    pub fn is_config(&self) -> bool {
        match self {
            Error::Config(_) | Error::Format { .. } => true,
            Error::Client { source, .. } => source.is_config(),
            _ => false,
        }
    }
}
