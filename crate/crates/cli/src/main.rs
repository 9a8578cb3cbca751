//! `mfgc`: solve mean field games of controls and test them against
//! simulated N-player games.
//!
//! Exit status: 0 success, 1 failed check or verdict, 2 configuration
//! error, 3 solver did not converge, 4 missing solution directory.

mod commands;
mod config;
mod error;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::Context;
use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Parser)]
#[command(name = "mfgc", version, about = "Mean field games of controls: solver and N-player experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the model's standing assumptions and write validate.txt.
    Validate(Common),
    /// Compute an approximate equilibrium and write it to <out>/solution.
    Solve(Common),
    /// Measure the effect of a single deviating player as N grows.
    Deviate(Common),
    /// Compare empirical flows with a solved equilibrium as N grows.
    Converge(Common),
    /// Estimate the finite-population Nash gap of a solved equilibrium.
    Nash(Common),
}

#[derive(Args)]
struct Common {
    /// Run configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Base seed; overrides `experiment.base_seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; falls back to MFGC_THREADS, then to all cores.
    #[arg(long)]
    threads: Option<usize>,
}

fn threads(flag: Option<usize>) -> Result<Option<usize>, CliError> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var("MFGC_THREADS") {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Config(format!("MFGC_THREADS must be a positive integer, got `{v}`"))),
        Err(_) => Ok(None),
    }
}

type Handler = fn(&Context) -> Result<u8, CliError>;

fn run(cli: Cli) -> Result<u8, CliError> {
    let (command, common): (Handler, Common) = match cli.command {
        Command::Validate(c) => (commands::validate, c),
        Command::Solve(c) => (commands::solve, c),
        Command::Deviate(c) => (commands::deviate, c),
        Command::Converge(c) => (commands::converge, c),
        Command::Nash(c) => (commands::nash, c),
    };
    let text = std::fs::read_to_string(&common.config)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", common.config.display())))?;
    let config = RunConfig::parse(&text)?;
    if let Some(k) = threads(common.threads)? {
        if k == 0 {
            return Err(CliError::Config("thread count must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| CliError::Config(format!("cannot start {k} threads: {e}")))?;
    }
    let ctx = Context {
        out: common.out.unwrap_or_else(|| config.out.clone()),
        seed: common.seed.unwrap_or(config.experiment.base_seed),
        config,
    };
    command(&ctx)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("mfgc: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
