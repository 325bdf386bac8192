//! Library side of the `yada` harness: configuration loading and the
//! command implementations, kept separate from argument parsing so tests
//! can drive them directly.

pub mod commands;
pub mod config;

use thiserror::Error;

pub use commands::{
    cmd_compile, cmd_ingest, cmd_query, cmd_report, cmd_simulate, cmd_validate, IngestOutcome,
    SimulateOutcome,
};
pub use config::{HarnessConfig, LoadedConfig, Overrides};

/// Failure classes with stable process exit codes.
#[derive(Debug, Error)]
pub enum CliError {
    /// Malformed or invalid schema, data, path or selection input.
    #[error("{0}")]
    Parse(String),
    #[error("configuration error: {0}")]
    Config(String),
    /// A dataset holds fewer usable rows than requested.
    #[error("dataset under-run: {0}")]
    UnderRun(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse(_) => 1,
            CliError::Config(_) => 2,
            CliError::UnderRun(_) => 3,
        }
    }
}
