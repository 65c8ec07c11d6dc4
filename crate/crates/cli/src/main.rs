use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    pemap_cli::run(pemap_cli::Cli::parse())
}
