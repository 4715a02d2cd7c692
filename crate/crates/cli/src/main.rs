mod commands;
mod config;
mod error;
mod output;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::{ExperimentConfig, Resolved};
use crate::error::CliResult;

#[derive(Parser)]
#[command(
    name = "mfg",
    version,
    about = "Bounded-rationality equilibria of finite mean field games"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one game with one algorithm. Writes trace.csv and result.json,
    /// plus ensemble.json for receding-horizon algorithms.
    Run(ExperimentConfig),
    /// Solve the three regularized concepts at every temperature in --alphas.
    /// Writes the t=0 policy rows to simplex.csv.
    SweepAlpha(ExperimentConfig),
    /// Track the distance of receding-horizon policies to the full-horizon
    /// equilibrium for every lookahead in --horizons. Writes rh.csv.
    RhCompare(ExperimentConfig),
    /// Count iterations of sequential and parallel receding-horizon play.
    /// Writes seqpar.csv.
    RhSeqVsPar(ExperimentConfig),
    /// Check transition rows and rewards of a game on probe mean fields.
    Validate(ExperimentConfig),
}

fn dispatch(command: Command) -> CliResult<ExitCode> {
    let (args, action): (ExperimentConfig, fn(&Resolved) -> CliResult<bool>) = match command {
        Command::Run(a) => (a, commands::run),
        Command::SweepAlpha(a) => (a, commands::sweep),
        Command::RhCompare(a) => (a, commands::compare_horizons),
        Command::RhSeqVsPar(a) => (a, commands::seq_vs_par),
        Command::Validate(a) => (a, commands::validate),
    };
    let cfg = args.resolve()?;
    let converged = action(&cfg)?;
    if cfg.require_convergence && !converged {
        eprintln!("mfg: tolerance not reached");
        return Ok(ExitCode::from(4));
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("mfg: {e}");
            e.exit_code()
        }
    }
}
