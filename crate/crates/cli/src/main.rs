mod commands;
mod config;

use std::process::ExitCode;

use clap::Parser;

use crate::config::{Cli, Command, Settings, UsageError};

fn run(cli: &Cli) -> anyhow::Result<bool> {
    let settings = Settings::resolve(&cli.opts)?;
    match cli.command {
        Command::Synth => commands::synth(&settings)?,
        Command::Graph => commands::graph(&settings)?,
        Command::Train => commands::train_models(&settings)?,
        Command::Eval => commands::eval(&settings)?,
        Command::Explain => commands::explain(&settings)?,
        Command::Gradcheck => return commands::gradcheck(&settings),
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: gradient check failed");
            ExitCode::from(1)
        }
        Err(e) if e.downcast_ref::<UsageError>().is_some() => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
