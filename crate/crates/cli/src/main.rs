//! `arraysep`: separation, DOA estimation, losses, simulation and evaluation
//! over WAV files and JSON documents.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod args;
mod commands;
mod io;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

/// Exit codes other than 0 (success) and 2 (usage error, reported by clap).
pub mod exit {
    pub const INVALID_CONFIG: u8 = 3;
    pub const INVALID_INPUT: u8 = 4;
    pub const IO: u8 = 5;
    pub const NUMERICAL: u8 = 6;
    /// `doa --strict` found fewer directions than requested.
    pub const INCOMPLETE: u8 = 7;
}

fn exit_code(err: &arraysep::Error) -> u8 {
    match err {
        arraysep::Error::InvalidConfig(_) => exit::INVALID_CONFIG,
        arraysep::Error::InvalidInput(_) => exit::INVALID_INPUT,
        arraysep::Error::Io(_) => exit::IO,
        arraysep::Error::Numerical(_) => exit::NUMERICAL,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Separate(a) => commands::separate::run(a),
        Command::Doa(a) => commands::doa::run(a),
        Command::Loss(a) => commands::loss::run(a),
        Command::Simulate(a) => commands::simulate::run(a),
        Command::Eval(a) => commands::eval::run(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
