use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, HarnessError>;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("unknown method {name:?}; registered methods: {registered}")]
    InvalidMethod { name: String, registered: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("seed {seed} diverged at iteration {iteration}")]
    Divergence { seed: u64, iteration: usize },

    #[error("no applicable (method, level) cells in the sweep grid")]
    EmptyGrid,

    #[error("report needs at least two completed cells, found {0}")]
    TooFewCells(usize),

    #[error("malformed {what} at line {line}: {detail}")]
    Parse {
        what: &'static str,
        line: usize,
        detail: String,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] mtlab_core::Error),
}

impl HarnessError {
    /// Process exit status for the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::InvalidMethod { .. }
            | HarnessError::Config(_)
            | HarnessError::EmptyGrid
            | HarnessError::TooFewCells(_) => 2,
            HarnessError::Divergence { .. } => 3,
            HarnessError::Parse { .. } | HarnessError::Io { .. } | HarnessError::Core(_) => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            source,
        }
    }
}

pub fn parse_method(name: &str) -> Result<mtlab_core::Method> {
    name.parse().map_err(|_| HarnessError::InvalidMethod {
        name: name.to_string(),
        registered: mtlab_core::Method::registered_names().join(", "),
    })
}
