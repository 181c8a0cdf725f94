use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;
mod error;
mod output;

use error::Failure;

/// Restricted Boltzmann machine experiments: training, classification,
/// local-valley analysis, likelihood estimation and continual learning.
#[derive(Parser, Debug)]
#[command(name = "rbmlab", version)]
struct Cli {
    /// More log output (-v info, -vv debug); RUST_LOG overrides it
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a model and record per-epoch metrics
    Train(commands::train::TrainArgs),
    /// Classify the test set with a checkpoint
    Classify(commands::classify::ClassifyCmdArgs),
    /// Histogram the local valleys reached by a sample population
    Valleys(commands::valleys::ValleysArgs),
    /// Estimate ln Z and the log-likelihood of a checkpoint
    Ais(commands::ais::AisArgs),
    /// Run the class-pair continual-learning schedule
    Cf(commands::cf::CfArgs),
    /// Write a synthetic prototype-plus-noise dataset
    GenData(commands::gen_data::GenDataArgs),
}

fn dispatch(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Train(a) => commands::train::run(a),
        Command::Classify(a) => commands::classify::run(a),
        Command::Valleys(a) => commands::valleys::run(a),
        Command::Ais(a) => commands::ais::run(a),
        Command::Cf(a) => commands::cf::run(a),
        Command::GenData(a) => commands::gen_data::run(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{f}");
            ExitCode::from(f.exit_code())
        }
    }
}
