use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the command layer, each mapped to a process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage error: {0}")]
    Usage(String),

    /// Malformed or invalid configuration; `path` is the JSON path at fault.
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] nullprobe::Error),
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use nullprobe::Error as E;
        match self {
            CliError::Usage(_) | CliError::Config { .. } | CliError::Io { .. } => 2,
            CliError::Core(e) => match e {
                E::Validation(_) | E::Input(_) | E::Io { .. } | E::Format { .. } | E::UnsupportedVersion(_) => 2,
                E::DegenerateLabels(_)
                | E::Convergence { .. }
                | E::Singular(_)
                | E::UndefinedMetric(_)
                | E::DegenerateFold { .. }
                | E::DegenerateNull(_)
                | E::Replicate { .. } => 3,
            },
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}
