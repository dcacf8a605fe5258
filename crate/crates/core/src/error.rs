use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument or data structure violates a documented invariant.
    #[error("validation error: {0}")]
    Validation(String),

    /// A caller-supplied input is out of range or mis-shaped.
    #[error("input error: {0}")]
    Input(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A trace directory is malformed; `file` names the offending file.
    #[error("format error in {file}: {message}")]
    Format { file: String, message: String },

    #[error("unsupported trace format version {0} (expected 1)")]
    UnsupportedVersion(u32),

    /// A classifier was asked to fit labels containing a single class.
    #[error("degenerate labels: {0}")]
    DegenerateLabels(String),

    #[error("solver did not converge after {iterations} iterations (gradient norm {grad_norm:e})")]
    Convergence { iterations: usize, grad_norm: f64 },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    /// A cross-validation training split contains a single class.
    #[error("degenerate fold {fold}: {message}")]
    DegenerateFold { fold: usize, message: String },

    /// The null statistics have zero spread, so a Z score is undefined.
    #[error("degenerate null distribution: {0}")]
    DegenerateNull(String),

    /// A null replicate failed; replicates are never dropped.
    #[error("null replicate {index} failed: {source}")]
    Replicate {
        index: usize,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(file: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Format {
            file: file.into(),
            message: message.into(),
        }
    }
}
