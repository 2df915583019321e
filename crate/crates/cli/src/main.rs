mod args;
mod commands;
mod error;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{CommandFactory, Parser};

use args::{Cli, Command};
use error::{CliError, CliResult};

/// Sizes the global thread pool from `SPDMIX_THREADS` when set.
fn configure_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var("SPDMIX_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("SPDMIX_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot size the thread pool: {e}")))
}

fn run(cli: &Cli) -> CliResult<()> {
    configure_threads()?;
    match &cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Fit(a) => commands::fit(a),
        Command::Test(a) => commands::test(a),
        Command::Variogram(c) => commands::variogram(c),
        Command::Diagnose(a) => commands::diagnose(a),
        Command::ImportCsv(a) => commands::import_csv(a),
        Command::ExportCsv(a) => commands::export_csv(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => e.exit(),
        Err(e) => {
            let text = e.render().to_string();
            eprint!("{text}");
            if !text.contains("Usage:") {
                eprintln!("\n{}", Cli::command().render_usage());
            }
            return ExitCode::from(2);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("spdmix: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
