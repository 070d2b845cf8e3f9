use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::error::ErrorKind;
use clap::Parser;
use lsh::commands::{dispatch, Command, RunOptions};
use lsh::config::ExperimentConfig;
use lsh::output::{emit, Envelope};
use lsh::CliError;

const EXIT_INAPPLICABLE: u8 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "lsh",
    version,
    about = "Linear stochastic Hamiltonian systems: analysis and Monte Carlo experiments",
    override_usage = "lsh <COMMAND> --config <FILE> [--seed N] [--out <PATH>]"
)]
struct Args {
    /// One of: stability, invariant, simulate, filter, robust, compose, transfer
    #[arg(value_parser = parse_command)]
    command: Command,
    /// Experiment configuration (JSON)
    #[arg(long)]
    config: PathBuf,
    /// Seed for stochastic commands; overrides simulation.seed
    #[arg(long)]
    seed: Option<u64>,
    /// Output path; the envelope is written as .json and any time series as .csv
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_command(s: &str) -> Result<Command, String> {
    s.parse().map_err(|e: CliError| e.to_string())
}

fn run(args: Args) -> Result<bool, CliError> {
    let cfg = ExperimentConfig::load(&args.config)?;
    let opts = RunOptions {
        seed: args.seed,
        ..RunOptions::default()
    };
    let start = Instant::now();
    let report = dispatch(args.command, &cfg, &opts)?;
    let digest = cfg.digest();
    let envelope = Envelope::new(args.command.as_str(), &digest, &report, start.elapsed().as_secs_f64());
    let out = args.out.or_else(|| cfg.output.path.as_ref().map(PathBuf::from));
    emit(&envelope, report.series.as_ref(), out.as_deref(), cfg.output.format)?;
    for d in &report.diagnostics {
        log::warn!("{d}");
    }
    Ok(report.applicable)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(64);
        }
    };
    match run(args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_INAPPLICABLE),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
