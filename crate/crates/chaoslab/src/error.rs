use std::path::{Path, PathBuf};

/// Harness failures, grouped by the process exit code they map to.
#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("plan validation failed: {0}")]
    Plan(String),

    #[error("malformed input: {0}")]
    Format(String),

    #[error("numeric failure in cell N={n}, rep={rep}{}: {source}", t.map(|t| format!(", t={t}")).unwrap_or_default())]
    Cell {
        n: usize,
        rep: usize,
        t: Option<f64>,
        #[source]
        source: chaoslab_core::Error,
    },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("numeric failure: {0}")]
    Core(#[from] chaoslab_core::Error),

    #[error("I/O failure at {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl HarnessError {
    pub fn exit_code(&self) -> u8 {
        match self {
            HarnessError::Plan(_) | HarnessError::Format(_) => 2,
            HarnessError::Cell { .. } | HarnessError::Numeric(_) | HarnessError::Core(_) => 3,
            HarnessError::Io { .. } => 4,
        }
    }

    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
