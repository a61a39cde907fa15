//! `plate-kit`: dataset validation, pseudo-label filtering and merging,
//! detection and recognition evaluation, and synthetic plate generation.
//!
//! Exit status: 0 success, 1 findings (parse errors, skipped images,
//! undefined metrics), 2 usage, 3 I/O failure.

mod args;
mod commands;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command};
use commands::{Failure, Status};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(Status::Usage as u8),
            };
        }
    };
    let result = match &cli.command {
        Command::Validate(a) => commands::validate(a),
        Command::Filter(a) => commands::filter(a),
        Command::Merge(a) => commands::merge(a),
        Command::EvalDet(a) => commands::eval_det(a),
        Command::EvalRec(a) => commands::eval_rec(a),
        Command::Synth(a) => commands::synth(a),
    };
    let status = match result {
        Ok(s) => s,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            Status::Usage
        }
        Err(Failure::Io(msg)) => {
            eprintln!("error: {msg}");
            Status::Io
        }
    };
    ExitCode::from(status as u8)
}
