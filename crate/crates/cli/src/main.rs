//! `iadn` — command-line frontend for the illumination-aware multispectral
//! pedestrian detector: dataset synthesis, training, detection, evaluation,
//! gradient checking, and curve plotting.
//!
//! Exit status contract: 0 on success, 1 on usage errors (bad flags, with
//! usage text on stderr), 2 on runtime or data errors. All randomness comes
//! from explicit `--seed` flags; no environment variables are consulted.

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

mod commands;
mod config;
mod svg;

use commands::{detect, eval, gen_data, gradcheck, plot, train};

/// Command failure, split by which exit code it maps to.
#[derive(Debug)]
pub enum CmdError {
    /// Bad flag values or combinations (exit 1).
    Usage(String),
    /// Failures while doing the work: I/O, malformed files, numeric
    /// trouble, or a failed verification (exit 2).
    Runtime(String),
}

impl From<iadn_core::Error> for CmdError {
    fn from(e: iadn_core::Error) -> Self {
        CmdError::Runtime(e.to_string())
    }
}

pub type CmdResult = Result<(), CmdError>;

#[derive(Parser)]
#[command(
    name = "iadn",
    version,
    about = "Illumination-aware multispectral pedestrian detection at desk scale",
    disable_help_subcommand = true
)]
enum Cli {
    /// Generate a synthetic paired visible/thermal dataset.
    GenData(gen_data::Args),
    /// Train a detector and write a run directory.
    Train(train::Args),
    /// Run a trained detector over a dataset and save its detections.
    Detect(detect::Args),
    /// Evaluate a checkpoint or a detections file against a dataset.
    Eval(eval::Args),
    /// Verify training-loss gradients against finite differences.
    Gradcheck(gradcheck::Args),
    /// Re-render the miss-rate/FPPI plot from emitted curve files.
    Plot(plot::Args),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help and --version surface as "errors" here but exit 0.
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli {
        Cli::GenData(args) => gen_data::run(args),
        Cli::Train(args) => train::run(args),
        Cli::Detect(args) => detect::run(args),
        Cli::Eval(args) => eval::run(args),
        Cli::Gradcheck(args) => gradcheck::run(args),
        Cli::Plot(args) => plot::run(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CmdError::Usage(msg)) => {
            eprintln!("error: {msg}");
            eprintln!("usage: see `iadn <command> --help` for flag details");
            ExitCode::from(1)
        }
        Err(CmdError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
