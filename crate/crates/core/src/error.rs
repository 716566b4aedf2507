use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("invalid stain matrix: {0}")]
    InvalidStainMatrix(String),

    #[error("stain matrix is singular (condition number {condition:.3e})")]
    SingularMatrix { condition: f64 },

    #[error("degenerate data: {foreground} foreground pixels, at least {required} required")]
    DegenerateData { foreground: usize, required: usize },

    #[error("stain atom '{stain}' collapsed: no pixel uses it")]
    CollapsedAtom { stain: String },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Format { path: path.into(), message: message.to_string() }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
