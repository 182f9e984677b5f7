//! Error type shared across the pipeline stages.

use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by ingestion, pipeline stages, and evaluation.
#[derive(Debug, Error)]
pub enum Error {
    /// An operation was called with an argument outside its documented domain.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// A record or value violates a domain invariant.
    #[error("validation: {0}")]
    Validation(String),

    /// A malformed or invalid line in an input file.
    #[error("{}:{line}: {message}", path.display())]
    Ingest {
        path: PathBuf,
        line: u64,
        message: String,
    },

    /// An operation's documented precondition does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Bad or inconsistent configuration.
    #[error("configuration: {0}")]
    Config(String),

    /// Filesystem failure, annotated with the offending path.
    #[error("i/o on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A pipeline stage failed; names the stage, keeps the cause's class.
    #[error("stage {stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Shorthand for an [`Error::Io`] with the offending path attached.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Wraps the error with the pipeline stage it occurred in.
    pub fn with_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Process exit code for this error class: 1 validation, 2 I/O, 3 config.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => 2,
            Error::Config(_) => 3,
            Error::Stage { source, .. } => source.exit_code(),
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
