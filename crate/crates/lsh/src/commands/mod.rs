//! Subcommand implementations. Each returns a [`Report`]; none writes
//! output itself.

mod analysis;
mod stochastic;

use std::fmt;
use std::str::FromStr;

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::output::Report;

pub use analysis::{compose, invariant, stability, transfer};
pub use stochastic::{filter, robust, simulate};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Stability,
    Invariant,
    Simulate,
    Filter,
    Robust,
    Compose,
    Transfer,
}

impl Command {
    pub const ALL: [Command; 7] = [
        Self::Stability,
        Self::Invariant,
        Self::Simulate,
        Self::Filter,
        Self::Robust,
        Self::Compose,
        Self::Transfer,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Stability => "stability",
            Self::Invariant => "invariant",
            Self::Simulate => "simulate",
            Self::Filter => "filter",
            Self::Robust => "robust",
            Self::Compose => "compose",
            Self::Transfer => "transfer",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Command {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| CliError::Usage(format!("unknown command '{s}'")))
    }
}

/// Run settings that do not belong in the config file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// Overrides `simulation.seed`.
    pub seed: Option<u64>,
    pub threads: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            seed: None,
            threads: crate::ensemble::worker_count(),
        }
    }
}

pub fn dispatch(command: Command, cfg: &ExperimentConfig, opts: &RunOptions) -> CliResult<Report> {
    match command {
        Command::Stability => stability(cfg),
        Command::Invariant => invariant(cfg),
        Command::Simulate => simulate(cfg, opts),
        Command::Filter => filter(cfg, opts),
        Command::Robust => robust(cfg, opts),
        Command::Compose => compose(cfg),
        Command::Transfer => transfer(cfg),
    }
}
