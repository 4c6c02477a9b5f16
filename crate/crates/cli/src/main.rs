use std::process::ExitCode;

use clap::Parser;
use gcg_cli::commands::{execute, Cli};

fn main() -> ExitCode {
    ExitCode::from(execute(Cli::parse()))
}
