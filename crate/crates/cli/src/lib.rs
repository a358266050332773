//! Configuration, orchestration and output for the `phi4` command.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod pool;

pub use config::Config;
pub use error::{CliError, CliResult};
pub use manifest::RunManifest;
