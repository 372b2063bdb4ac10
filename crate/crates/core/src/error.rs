use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value encountered in {0}")]
    NumericOverflow(String),

    #[error("singular mass matrix: |det| = {det:e} is below 1e-12")]
    SingularMassMatrix { det: f64 },

    #[error("non-finite gradient in parameter block `{block}`")]
    NonFiniteGradient { block: String },

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension { what: &'static str, expected: usize, got: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("integration diverged at step {step}{}", trajectory.map(|t| format!(" of trajectory {t}")).unwrap_or_default())]
    Divergence { step: usize, trajectory: Option<usize> },

    #[error("I/O error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("malformed file{}: {msg}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Malformed { line: Option<usize>, msg: String },

    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("inconsistent data: {0}")]
    Consistency(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn malformed(line: Option<usize>, msg: impl Into<String>) -> Self {
        Error::Malformed { line, msg: msg.into() }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
