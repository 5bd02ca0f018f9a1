use std::process::ExitCode;

use clap::Parser;
use cshape::cli::{run, Cli};

fn main() -> ExitCode {
    let arguments: Vec<String> = std::env::args().collect();
    let cli = Cli::parse();
    match run(cli, arguments) {
        Ok(outcome) => {
            for line in &outcome.summary {
                println!("{line}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.report());
            ExitCode::from(e.kind.exit_code() as u8)
        }
    }
}
