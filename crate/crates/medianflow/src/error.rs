use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::config::Issue;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config {}: {message}", if path.is_empty() { "file" } else { path.as_str() })]
    ConfigParse { path: String, message: String },

    #[error("invalid config:\n{}", .0.iter().map(|i| format!("  {i}")).collect::<Vec<_>>().join("\n"))]
    ConfigInvalid(Vec<Issue>),

    #[error(transparent)]
    Core(#[from] medianflow_core::Error),

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("{0}")]
    Usage(String),

    /// A run failed; the last good state was written to `checkpoint`.
    #[error("seed {seed}: {source} (last good state in {})", checkpoint.display())]
    Aborted { seed: u64, source: medianflow_core::Error, checkpoint: PathBuf },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.to_path_buf(), source }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
