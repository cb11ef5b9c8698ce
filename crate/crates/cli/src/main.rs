//! `rpel`: command-line driver for robust pull-based epidemic learning experiments.

mod commands;
mod config;
mod error;
mod output;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::{AggBenchArgs, FracSimArgs, RunArgs, SelectParamsArgs};

#[derive(Debug, Parser)]
#[command(name = "rpel", version, about = "Robust pull-based epidemic learning simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Pick the smallest sample size whose effective adversarial fraction is below q.
    SelectParams(SelectParamsArgs),
    /// Simulate the effective adversarial fraction over a grid of n and s.
    FracSim(FracSimArgs),
    /// Run an experiment configuration.
    Run(RunArgs),
    /// Measure the robustness constant of aggregation rules on given instances.
    AggBench(AggBenchArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::SelectParams(args) => commands::select_params(args),
        Command::FracSim(args) => commands::frac_sim(args),
        Command::Run(args) => commands::run(args),
        Command::AggBench(args) => commands::agg_bench(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
