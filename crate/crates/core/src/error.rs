use std::path::PathBuf;

/// Errors produced by the library.
///
/// Variants are grouped by the failure class the CLI maps onto exit codes:
/// configuration/usage problems, data problems and numeric failures.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {context}: expected {expected}, got {actual}")]
    Shape {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown architecture `{0}`")]
    UnknownArchitecture(String),

    #[error("patch size {0} is not a candidate of the score table")]
    UnknownSize(usize),

    #[error("score table has no selected sizes")]
    EmptyScores,

    #[error("patch size {size} does not fit any scene (largest supported is {max})")]
    PatchTooLarge { size: usize, max: usize },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("non-finite loss at step {step}")]
    Diverged { step: usize },

    #[error("missing saved state: {0}")]
    MissingState(&'static str),
}

impl Error {
    pub(crate) fn shape(context: &'static str, expected: impl ToString, actual: impl ToString) -> Self {
        Error::Shape {
            context,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
