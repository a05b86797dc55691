mod args;
mod commands;
mod config;
mod output;
mod plot;

use std::process::ExitCode;

use clap::Parser;

use crate::args::{Cli, Cmd, Overrides};
use crate::config::{Command, FileConfig};

/// Failure classes, mapped to exit codes 1 and 2.
#[derive(Debug)]
pub enum CliError {
    Validation(anyhow::Error),
    Numerical(anyhow::Error),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Numerical(_) => 2,
        }
    }

    fn inner(&self) -> &anyhow::Error {
        match self {
            CliError::Validation(e) | CliError::Numerical(e) => e,
        }
    }
}

macro_rules! classify {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                if e.is_numerical() {
                    CliError::Numerical(e.into())
                } else {
                    CliError::Validation(e.into())
                }
            }
        }
    )*};
}

classify!(
    vri::PotentialError,
    vri::DynamicsError,
    vri::DescriptorError,
    vri::ManifoldError,
    vri::ExperimentError
);

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Validation(e.into())
    }
}

fn run(command: Command, flags: Overrides) -> Result<(), CliError> {
    let file = match &flags.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let eff = config::resolve(command, flags, file)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(eff.threads)
        .build()
        .map_err(|e| CliError::Validation(e.into()))?;
    pool.install(|| commands::run(&eff))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let (command, flags) = match cli.command {
        Cmd::CriticalPoints(o) => (Command::CriticalPoints, o),
        Cmd::LdField(o) => (Command::LdField, o),
        Cmd::Branching(o) => (Command::Branching, o),
        Cmd::Sweep(o) => (Command::Sweep, o),
        Cmd::Fit(o) => (Command::Fit, o),
    };
    match run(command, flags) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {:#}", e.inner());
            ExitCode::from(e.code())
        }
    }
}
