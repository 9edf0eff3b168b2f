//! `velosurf` command-line tool.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
//! Errors are printed to stderr as one JSON object per line.

mod cli;
mod commands;
mod config;
mod failure;
mod manifest;

use std::process::ExitCode;

use clap::Parser;

use crate::cli::{Cli, Command};
use crate::commands::Globals;
use crate::failure::{Failure, EXIT_USAGE};

fn run(args: Vec<String>) -> Result<(), Failure> {
    let args = config::merge_config(args)?;
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return Ok(());
            }
            return Err(Failure::usage(e.to_string().trim_end()));
        }
    };
    if let Some(n) = cli.jobs {
        if n == 0 {
            return Err(Failure::usage("--jobs must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::usage(format!("cannot size the worker pool: {e}")))?;
    }
    let g = Globals {
        jobs: cli.jobs,
        strict: cli.strict,
    };
    match &cli.command {
        Command::Validate(a) => commands::validate(a, &g),
        Command::Preprocess(a) => commands::preprocess_cmd(a, &g),
        Command::Train(a) => commands::train_cmd(a, &g),
        Command::Gridsearch(a) => commands::gridsearch(a, &g),
        Command::Predict(a) => commands::predict(a, &g),
        Command::Surface(a) => commands::surface(a, &g),
        Command::Outliers(a) => commands::outliers(a, &g),
        Command::Synth(a) => commands::synth(a, &g),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(std::env::args().collect()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.to_json());
            ExitCode::from(u8::try_from(f.code).unwrap_or(EXIT_USAGE as u8))
        }
    }
}
