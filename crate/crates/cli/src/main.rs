mod args;
mod commands;
mod config;
mod error;

use clap::{CommandFactory, FromArgMatches};
use serde_json::json;

use args::{Cli, Command};
use config::resolve;
use error::CliError;

fn run() -> Result<(), CliError> {
    let matches = Cli::command().get_matches();
    let cli = Cli::from_arg_matches(&matches).map_err(|e| CliError::usage(e.to_string()))?;
    let (name, sub) = matches.subcommand().expect("a subcommand is required");
    match cli.command {
        Command::Bound(a) => commands::bound(&a),
        Command::Convergence(a) => commands::convergence(&a),
        Command::Recover(a) => {
            let cfg = a.common.config.clone();
            let full = [("trials", json!(1000))];
            commands::recover(&resolve(a, sub, name, cfg.as_deref(), &full)?)
        }
        Command::Sweep(a) => {
            let cfg = a.common.config.clone();
            let full = [
                ("trials", json!(1000)),
                ("stages", json!(10_000)),
                ("n_min", json!(1)),
                ("n_step", json!(1)),
                ("k_step", json!(1)),
            ];
            commands::sweep(&resolve(a, sub, name, cfg.as_deref(), &full)?)
        }
        Command::MinMeasurements(a) => {
            let cfg = a.common.config.clone();
            let full = [("trials", json!(1000)), ("stages", json!(10_000))];
            commands::min_measurements(&resolve(a, sub, name, cfg.as_deref(), &full)?)
        }
        Command::Classify(a) => {
            let cfg = a.common.config.clone();
            commands::classify(&resolve(a, sub, name, cfg.as_deref(), &[])?)
        }
    }
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {}", e.message);
        std::process::exit(e.code);
    }
}
