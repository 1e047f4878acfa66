use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("length mismatch: expected {expected}, got {actual} ({what})")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("numerical failure after {iterations} iterations: {message}")]
    Numerical {
        message: String,
        iterations: usize,
        last_objective: f64,
    },

    /// A half-step of the alternating solver failed; `trace` holds the
    /// objective values recorded before the failure.
    #[error("re-ranking failed at outer iteration {}", trace.len())]
    Rerank {
        trace: Vec<f64>,
        #[source]
        source: Box<Error>,
    },

    #[error("experiment stage `{stage}` failed{}", cell.as_ref().map(|c| format!(" in cell {c}")).unwrap_or_default())]
    Stage {
        stage: &'static str,
        cell: Option<String>,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn at_stage(self, stage: &'static str, cell: Option<String>) -> Self {
        Error::Stage {
            stage,
            cell,
            source: Box::new(self),
        }
    }
}
