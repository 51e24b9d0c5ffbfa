//! Command-line front end: resolves flags into a [`RunConfig`], runs one
//! command, and renders a JSON or CSV report.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::fs;
use std::io::Write;

use clap::Parser;

pub use config::{Cli, Command, OutFormat, RunConfig};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_FAILURE: i32 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Numerical(String),
    #[error("cannot write output: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Io(_) => EXIT_USAGE,
            CliError::Numerical(_) => EXIT_FAILURE,
        }
    }
}

impl From<gfclt::Error> for CliError {
    fn from(e: gfclt::Error) -> Self {
        use gfclt::Error as E;
        match e {
            E::InvalidKernel(_)
            | E::InvalidDistribution(_)
            | E::InvalidArgument(_)
            | E::EnumerationTooLarge { .. } => CliError::Usage(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

/// Rendered report and whether every check in it passed.
#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub body: String,
    pub passed: bool,
}

/// Runs a resolved configuration without touching stdout or the filesystem
/// (apart from `dump_series`).
pub fn execute(cfg: &RunConfig) -> Result<Outcome, CliError> {
    match cfg.command {
        Command::Analyze => commands::analyze(cfg),
        Command::Coeffs => commands::coeffs(cfg),
        Command::VerifyDefant => commands::verify_defant(cfg),
        Command::Simulate => commands::simulate(cfg),
    }
}

/// Parses `args`, runs the command, writes the report, and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                EXIT_USAGE
            } else {
                EXIT_PASS
            };
        }
    };
    let result = RunConfig::from_cli(&cli).and_then(|cfg| {
        let outcome = execute(&cfg)?;
        emit(&cfg, &outcome.body)?;
        Ok(outcome)
    });
    match result {
        Ok(o) if o.passed => EXIT_PASS,
        Ok(_) => {
            log::error!("one or more checks failed");
            EXIT_FAILURE
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn emit(cfg: &RunConfig, body: &str) -> Result<(), CliError> {
    match &cfg.out_path {
        Some(path) => fs::write(path, body)?,
        None => std::io::stdout().lock().write_all(body.as_bytes())?,
    }
    Ok(())
}
