//! Error taxonomy shared by the library, the CLI, and the FFI layer.
//!
//! Exit-code mapping used by the `nlkg` binary:
//! `0` success, `1` I/O or internal failure, `2` configuration error,
//! `3` numerical failure (blow-up, non-convergence, solver breakdown),
//! `4` acceptance-suite failure.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NlkgError {
    /// Invalid configuration or arguments (bad ranges, unknown keys,
    /// inconsistent grid/solver combinations).
    #[error("config error: {0}")]
    Config(String),

    /// A numerical procedure failed: non-convergence, singular systems,
    /// residuals above tolerance, missing eigenvalues.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// The field exceeded the blow-up guard during time evolution.
    #[error("blow-up detected at t = {t:.6}: max|u| = {max:.3e} (guard {guard:.3e})")]
    BlowUp { t: f64, max: f64, guard: f64 },

    /// One or more acceptance criteria failed.
    #[error("acceptance failure: {0}")]
    Acceptance(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, NlkgError>;

impl NlkgError {
    /// Process exit code for the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            NlkgError::Config(_) => 2,
            NlkgError::Numerical(_) | NlkgError::BlowUp { .. } => 3,
            NlkgError::Acceptance(_) => 4,
            NlkgError::Io(_) => 1,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        NlkgError::Config(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        NlkgError::Numerical(msg.into())
    }
}
