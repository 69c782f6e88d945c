use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    match vrfam::cli::execute(vrfam::cli::Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
