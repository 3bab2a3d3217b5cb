//! File formats, configuration and subcommands of the `modebank` tool.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;

pub use error::CliError;
