//! `mcpl`: experiment harness around the `multicalib` library.
//!
//! Four subcommands cover the full workflow: `gen` writes synthetic
//! datasets, `run` trains a predictor with the pseudolabel loop, `eval`
//! scores a saved model, and `analyze` prints the closed-form Gaussian
//! fixed point next to (optionally) an empirical run on sampled data.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or validation error,
//! 3 numerical failure.

mod analyze;
mod basis;
mod eval;
mod gen;
mod io;
mod keyval;
mod run;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "mcpl", version, about = "Multicalibration pseudolabel experiment harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic datasets (structural-causal or joint-Gaussian)
    #[command(subcommand)]
    Gen(gen::GenTarget),
    /// Train a predictor with the pseudolabel loop and write model + trace
    Run(Box<run::RunArgs>),
    /// Score a saved model on a dataset
    Eval(eval::EvalArgs),
    /// Closed-form Gaussian analysis of a covariance file
    Analyze(analyze::AnalyzeArgs),
}

/// Command failures split by exit code: flag-level misuse (1) versus
/// errors surfaced by the library (2 or 3 depending on kind).
#[derive(Debug)]
pub(crate) enum CmdError {
    Usage(String),
    Lib(multicalib::Error),
}

impl From<multicalib::Error> for CmdError {
    fn from(e: multicalib::Error) -> Self {
        CmdError::Lib(e)
    }
}

impl From<std::io::Error> for CmdError {
    fn from(e: std::io::Error) -> Self {
        CmdError::Lib(multicalib::Error::Io(e))
    }
}

impl From<csv::Error> for CmdError {
    fn from(e: csv::Error) -> Self {
        CmdError::Lib(multicalib::Error::Csv(e))
    }
}

pub(crate) type CmdResult = Result<(), CmdError>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let kind = err.kind();
            let _ = err.print();
            return match kind {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };

    let result = match cli.command {
        Command::Gen(target) => gen::execute(target),
        Command::Run(args) => run::execute(*args),
        Command::Eval(args) => eval::execute(args),
        Command::Analyze(args) => analyze::execute(args),
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CmdError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CmdError::Lib(err)) => {
            eprintln!("error: {err}");
            ExitCode::from(if err.is_numerical() { 3 } else { 2 })
        }
    }
}
