//! `cxai`: explain predictions, run sweeps and sensitivity analyses, serve the API.
//!
//! Exit codes: 2 configuration, 3 data, 4 predictor, 5 bind failure, 1 anything else.

mod args;
mod commands;
mod failure;
mod setup;

use std::process::ExitCode;

use clap::Parser;
use tracing::Level;

fn init_logging(verbose: u8, quiet: bool) {
    let level = match (quiet, verbose) {
        (true, _) => Level::ERROR,
        (false, 0) => Level::INFO,
        (false, 1) => Level::DEBUG,
        _ => Level::TRACE,
    };
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_max_level(level)
        .with_target(false)
        .init();
}

fn main() -> ExitCode {
    let cli = args::Cli::parse();
    init_logging(cli.verbose, cli.quiet);
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(failure::exit_code(&err))
        }
    }
}
