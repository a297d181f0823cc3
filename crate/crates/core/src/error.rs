use thiserror::Error;

/// Errors raised by learners, environments and estimators.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An algorithm or adversary broke the step contract at `step` (0-based).
    #[error("protocol violation at step {step}: {detail}")]
    ProtocolViolation { step: usize, detail: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A wrapped algorithm lacks a flag the wrapper depends on.
    #[error("contract error: {0}")]
    Contract(String),

    /// The operation is not supported for this input (e.g. exact evaluation of a
    /// continuous kernel, or an instance too large to enumerate).
    #[error("capability error: {0}")]
    Capability(String),

    #[error("smoothness violation: region measure {measure} is below sigma = {sigma}")]
    SmoothnessViolation { measure: f64, sigma: f64 },

    #[error("construction error: {0}")]
    Construction(String),

    #[error("undefined objective: {0}")]
    UndefinedObjective(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn at_step(self, step: usize) -> Self {
        match self {
            Error::ProtocolViolation { detail, .. } => Error::ProtocolViolation { step, detail },
            other => other,
        }
    }
}
