//! Experiment runner behind the `addnet` binary: config parsing and
//! validation, the five subcommands, and atomic artifact output.
//!
//! Every subcommand validates the whole config before touching the output
//! directory, echoes the effective config as `config.toml` next to its
//! artifacts, and derives all randomness from the root seed.

pub mod commands;
pub mod config;
pub mod output;

use thiserror::Error;

pub use config::{ConfigError, Resolved, RunConfig};
pub use output::OutDir;

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;
pub const EXIT_BENCHMARK: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid config:\n{}", .0.iter().map(|e| format!("  {e}")).collect::<Vec<_>>().join("\n"))]
    Config(Vec<ConfigError>),

    #[error(transparent)]
    Runtime(#[from] addnet::Error),

    #[error("benchmark assertion failed: {0}")]
    Benchmark(String),
}

impl CliError {
    pub fn config(key: &str, message: impl Into<String>) -> Self {
        CliError::Config(vec![ConfigError {
            line: None,
            key: key.into(),
            message: message.into(),
        }])
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Runtime(addnet::Error::SpecMismatch(_)) => EXIT_CONFIG,
            CliError::Runtime(_) => EXIT_RUNTIME,
            CliError::Benchmark(_) => EXIT_BENCHMARK,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.into())
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

/// Guide chapters about the binary, compiled so their snippets run as
/// doc-tests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/cli.md")]
    pub mod cli {}
    #[doc = include_str!("../../../book/src/config.md")]
    pub mod config {}
}
