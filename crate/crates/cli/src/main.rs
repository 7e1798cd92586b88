//! `rgtta` command-line driver: synthetic data generation, benchmark grids,
//! one-factor ablations and statistical reports.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 when a run aborts.

mod ablate;
mod bench;
mod config;
mod datasets;
mod gen_data;
mod plan;
mod stats_cmd;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "rgtta", version, about = "Regime-guided test-time adaptation benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the cross-product of policies, models, datasets, horizons and seeds.
    Bench(bench::BenchArgs),
    /// Sweep one policy parameter with everything else at its default.
    Ablate(ablate::AblateArgs),
    /// Write synthetic scenarios as CSV files.
    GenData(gen_data::GenDataArgs),
    /// Pairwise tests, win counts and Friedman/Nemenyi from a summary CSV.
    Stats(stats_cmd::StatsArgs),
}

/// Failure classes mapped to exit codes.
#[derive(Debug)]
pub enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    pub fn usage(e: impl Into<anyhow::Error>) -> Self {
        Failure::Usage(e.into())
    }

    pub fn runtime(e: impl Into<anyhow::Error>) -> Self {
        Failure::Runtime(e.into())
    }
}

pub type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Bench(a) => bench::run(a),
        Command::Ablate(a) => ablate::run(a),
        Command::GenData(a) => gen_data::run(a),
        Command::Stats(a) => stats_cmd::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
