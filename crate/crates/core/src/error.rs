use thiserror::Error;

/// Errors raised by the core library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain where the operation is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// A probability table or reward table has inconsistent dimensions.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// `q(y|x)` vanishes where `p(y|x)` has mass.
    #[error("support violation at prompt {prompt}, response {response}")]
    Support { prompt: usize, response: usize },

    /// The argmax of a reward row is not unique.
    #[error("reward row {prompt} has tied maxima; the delta policy is ambiguous")]
    Ambiguous { prompt: usize },

    /// A loss context lacks something the selected loss needs.
    #[error("configuration error: {0}")]
    Config(String),

    /// The requested operation is not defined for this ω variant.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// Parameter count exceeds the configured Hessian cap.
    #[error("size error: {params} parameters exceed the cap of {cap}")]
    Size { params: usize, cap: usize },

    /// A training run produced a non-finite value or diverged.
    #[error("training aborted at step {step}: {reason}")]
    Training { step: usize, reason: String },

    /// A value expected to be finite was not.
    #[error("internal numeric error: {0}")]
    Numeric(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
