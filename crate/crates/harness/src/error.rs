use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{context}: {source}")]
    Core {
        context: String,
        #[source]
        source: udrra_core::Error,
    },
}

impl HarnessError {
    pub fn core(context: impl Into<String>) -> impl FnOnce(udrra_core::Error) -> HarnessError {
        let context = context.into();
        move |source| HarnessError::Core { context, source }
    }

    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> HarnessError {
        let path = path.into();
        move |source| HarnessError::Io { path, source }
    }

    /// Process exit status: 2 for bad arguments, configs and unreadable or
    /// unwritable paths; 1 when a run itself fails.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Usage(_) | HarnessError::Config(_) | HarnessError::Io { .. } => 2,
            HarnessError::Core { source, .. } => match source {
                udrra_core::Error::Config(_)
                | udrra_core::Error::Domain(_)
                | udrra_core::Error::Shape(_)
                | udrra_core::Error::Parse(_) => 2,
                _ => 1,
            },
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
