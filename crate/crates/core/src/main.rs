use std::process::ExitCode;

use anyhow::Context;
use clap::Parser;
use emitter_unravel::cli::{execute, Args, CliError, RunConfig};

fn run(args: Args) -> anyhow::Result<()> {
    let config = RunConfig::from_args(args)?;
    let written = execute(&config).with_context(|| format!("{} run failed", config.mode()))?;
    for p in written {
        log::info!("wrote {}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::new()
        .filter_level(log::LevelFilter::Info)
        .init();
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if matches!(e.downcast_ref::<CliError>(), Some(CliError::Usage(_))) {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
