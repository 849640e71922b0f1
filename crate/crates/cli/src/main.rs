use std::io::{self, Write};
use std::process::ExitCode;

use clap::Parser;
use fragscan_cli::{run, Cli, EXIT_ERROR};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut stdout = io::stdout().lock();
    let status = run(&cli, &mut stdout);
    let _ = stdout.flush();
    match status {
        Ok(status) => ExitCode::from(status.exit_code()),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
