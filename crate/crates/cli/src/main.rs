//! `aroi` command-line tool.
//!
//! Exit codes: 0 success, 1 runtime error, 2 empty seed-slice result,
//! 64 usage error.

mod args;
mod backend;
mod commands;
mod report;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use commands::Outcome;

const EXIT_ERROR: u8 = 1;
const EXIT_EMPTY_SEED: u8 = 2;
const EXIT_USAGE: u8 = 64;

fn run(cli: Cli) -> anyhow::Result<Outcome> {
    match cli.command {
        Command::Segment(a) => commands::cmd_segment(&a),
        Command::Eval(a) => commands::cmd_eval(&a),
        Command::Phantom(a) => commands::cmd_phantom(&a),
        Command::Prep(a) => commands::cmd_prep(&a),
        Command::SweepRt(a) => commands::cmd_sweep_rt(&a),
        Command::Serve(a) => backend::cmd_serve(&a).map(|_| Outcome::Done),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // --help and --version are not errors
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::EmptySeed) => ExitCode::from(EXIT_EMPTY_SEED),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
