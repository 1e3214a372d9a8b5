//! `ersecov`: batch experiments with rotation-based covariance estimators.
//!
//! Every command writes CSV (or JSON-lines) files plus a `manifest.json`
//! with the parameters, seed and SHA-256 digests of the inputs. The exit
//! status is 0 only when every requested output was written, 1 on runtime
//! failures and 2 on usage errors.

mod args;
mod commands;
mod output;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::ReportCorr(a) => commands::report_corr(a),
        Command::Estimate(a) => commands::estimate(a),
        Command::Backtest(a) => commands::backtest(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Subsample(a) => commands::subsample(a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: some outputs could not be produced");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
