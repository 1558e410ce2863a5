//! File-based pipeline: sample → estimate → eval, plus ensemble and selective
//! answering reports. Every stage reads and writes files in the run's output
//! directory, so a run can be resumed or re-evaluated stage by stage.

pub mod config;
pub mod output;
pub mod records;
pub mod stages;

use std::path::Path;

use thiserror::Error;

pub use config::{LoadedConfig, Overrides, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("input: {0}")]
    Input(String),
    #[error("{0}")]
    Fatal(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.display().to_string(), source }
    }
}

/// How a stage ended; maps onto the process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    /// Some questions failed; the rest were written.
    Partial,
    Fatal,
}

impl Outcome {
    pub fn exit_code(self) -> u8 {
        match self {
            Outcome::Success => 0,
            Outcome::Fatal => 1,
            Outcome::Partial => 2,
        }
    }

    pub(crate) fn from_counts(succeeded: usize, failed: usize) -> Self {
        match (succeeded, failed) {
            (_, 0) => Outcome::Success,
            (0, _) => Outcome::Fatal,
            _ => Outcome::Partial,
        }
    }
}
