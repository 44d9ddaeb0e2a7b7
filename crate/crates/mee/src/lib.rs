//! Files, configuration and the `hmm-mee` command line around `mee-core`.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod exec;
pub mod io;
pub mod json;

pub use error::{CliError, CliResult};
