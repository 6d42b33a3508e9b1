use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = mmcl_cli::Cli::parse();
    match mmcl_cli::run(cli) {
        Ok(0) => ExitCode::SUCCESS,
        Ok(_) => ExitCode::FAILURE,
        Err(error) => {
            eprintln!("error: {error}");
            ExitCode::FAILURE
        }
    }
}
