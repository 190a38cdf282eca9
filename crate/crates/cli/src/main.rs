//! `headroom`: fit a 3PL item response model to binary response matrices
//! and report which items still separate the strongest responders.
//!
//! Subcommands cover the full workflow: `simulate` draws synthetic
//! populations with known parameters, `fit` and `sweep` run the
//! variational fit (fixed or grid-searched discrimination prior),
//! `analyze` recomputes reports from a stored fit, and `stability`
//! compares per-dataset statistics between a full fit and a refit with
//! responders or items excluded.
//!
//! Every run is deterministic given its seed. Failures print exactly one
//! stderr line, `error[<category>]: <detail>`, and exit with 2 (input),
//! 3 (degenerate fit, when `--fail-on-degenerate` is set), or 4 (I/O).

mod commands;
mod errors;
mod input;
mod report;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "headroom",
    version,
    about = "3PL item-response fits and headroom reports"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the model to a response file and write reports.
    Fit(commands::FitCmd),
    /// Fit once per discrimination-prior grid point, keep the best run.
    Sweep(commands::SweepCmd),
    /// Draw a synthetic population and its response matrix.
    Simulate(commands::SimulateCmd),
    /// Recompute reports from an existing fit document.
    Analyze(commands::AnalyzeCmd),
    /// Compare a full fit against a refit with responders or items excluded.
    Stability(commands::StabilityCmd),
}

fn main() {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Fit(cmd) => commands::run_fit(cmd),
        Command::Sweep(cmd) => commands::run_sweep(cmd),
        Command::Simulate(cmd) => commands::run_simulate(cmd),
        Command::Analyze(cmd) => commands::run_analyze(cmd),
        Command::Stability(cmd) => commands::run_stability(cmd),
    };
    if let Err(err) = outcome {
        eprintln!("{err}");
        std::process::exit(err.exit_code());
    }
}
