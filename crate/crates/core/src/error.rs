use std::path::PathBuf;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("insufficient gait: {0}")]
    InsufficientGait(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("degenerate test: {0}")]
    DegenerateTest(String),

    #[error("io error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("fold {fold_id}: {source}")]
    Fold {
        fold_id: usize,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn parse(context: impl Into<String>, message: impl ToString) -> Self {
        Error::Parse {
            context: context.into(),
            message: message.to_string(),
        }
    }

    pub(crate) fn validation(message: impl Into<String>) -> Self {
        Error::Validation(message.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Wraps the error with the fold it came from.
    pub fn in_fold(self, fold_id: usize) -> Self {
        match self {
            e @ Error::Fold { .. } => e,
            other => Error::Fold {
                fold_id,
                source: Box::new(other),
            },
        }
    }

    /// Short machine-friendly kind label, used in exclusion logs.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "ParseError",
            Error::Validation(_) => "ValidationError",
            Error::InsufficientGait(_) => "InsufficientGait",
            Error::Numerical(_) => "NumericalError",
            Error::DegenerateTest(_) => "DegenerateTest",
            Error::Io { .. } => "IoError",
            Error::Fold { source, .. } => source.kind(),
        }
    }
}
