// SPDX-License-Identifier: MIT OR Apache-2.0

//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the lab.
#[derive(Debug, Error)]
pub enum LabError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("plan error: {0}")]
    Plan(String),

    #[error("training diverged at step {step}: loss = {loss}")]
    Diverged { step: usize, loss: f64 },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("lookup error: {0}")]
    Lookup(String),

    #[error("ingestion error at `{key}`: {reason}")]
    Ingestion { key: String, reason: String },

    #[error("instance error: {0}")]
    Instance(String),

    #[error("selection error: {0}")]
    Selection(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Coarse classification used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numeric,
    Io,
}

impl LabError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        LabError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            LabError::Config(_) | LabError::Plan(_) | LabError::Selection(_) => ErrorClass::Config,
            LabError::Dimension(_)
            | LabError::Lookup(_)
            | LabError::Ingestion { .. }
            | LabError::Instance(_)
            | LabError::Data(_) => ErrorClass::Data,
            LabError::Diverged { .. } | LabError::Numeric(_) => ErrorClass::Numeric,
            LabError::Io { .. } => ErrorClass::Io,
        }
    }

    /// Process exit code for this error.
    pub fn exit_code(&self) -> u8 {
        match self.class() {
            ErrorClass::Config => 2,
            ErrorClass::Data => 3,
            ErrorClass::Numeric => 4,
            ErrorClass::Io => 5,
        }
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
