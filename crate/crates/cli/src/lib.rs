//! Command-line front end for `gridconsensus-core`: JSON scenario files,
//! CSV export and the `validate`, `coordinate` and `run` commands.

pub mod commands;
pub mod config;
pub mod export;

pub use commands::{CliError, Overrides};
pub use config::{ConfigError, ConfigFile, ModeSpec};
