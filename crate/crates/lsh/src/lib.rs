//! Configuration, experiment orchestration and output formats for the
//! `lsh` command-line tool.

pub mod commands;
pub mod config;
pub mod ensemble;
pub mod error;
pub mod output;

pub use commands::{dispatch, Command, RunOptions};
pub use config::ExperimentConfig;
pub use error::{CliError, CliResult};
pub use output::{Envelope, Report, Series};
