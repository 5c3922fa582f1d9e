//! `rddpm`: dataset synthesis, training, despeckling, evaluation, and
//! verification for the diffusion despeckler. Exit codes: 0 success, 1 for
//! anything the caller can fix (bad flags, invalid geometry, failed checks),
//! 2 for environment failures (I/O, corrupt files).

mod args;
mod commands;

use clap::error::ErrorKind;
use clap::Parser;

fn main() {
    let cli = match args::Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            std::process::exit(code);
        }
    };
    match commands::run(cli.command) {
        Ok(code) => std::process::exit(code),
        Err(err) => {
            eprintln!("error: {err}");
            std::process::exit(if err.is_validation() { 1 } else { 2 });
        }
    }
}
