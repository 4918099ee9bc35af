use std::path::Path;

/// Errors surfaced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Incompatible matrix/tensor shapes; the message names both shapes.
    #[error("dimension mismatch: {0}")]
    Dim(String),

    /// Invalid configuration (hyper-parameters, variant/shape consistency,
    /// degenerate generator specs, single-class training sets).
    #[error("configuration error: {0}")]
    Config(String),

    /// An internal contract was violated (non-scalar loss, mismatched
    /// optimizer state).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Malformed input file; carries the offending line number.
    #[error("parse error at {path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// A metric that is undefined for the given input, e.g. AUC on
    /// single-class labels.
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),
}

impl Error {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn parse(path: &Path, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.display().to_string(),
            line,
            msg: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
