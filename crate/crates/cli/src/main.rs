use std::process::ExitCode;

use clap::Parser;
use lap_cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    if matches!(cli.command, lap_cli::Command::Serve { .. }) {
        tracing_subscriber::fmt()
            .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
            .init();
    }
    let stdout = std::io::stdout();
    match run(&cli, &mut stdout.lock()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
