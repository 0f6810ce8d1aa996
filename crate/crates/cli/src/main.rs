mod audit;
mod bench;
mod eval;
mod io;
mod run;
mod synth;
mod train;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Exit codes are a stable contract.
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_INCOMPARABLE: u8 = 4;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn usage(msg: impl std::fmt::Display) -> Failure {
        Failure { code: EXIT_USAGE, error: anyhow::anyhow!("{msg}") }
    }

    pub fn incomparable(msg: impl std::fmt::Display) -> Failure {
        Failure { code: EXIT_INCOMPARABLE, error: anyhow::anyhow!("{msg}") }
    }
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Failure {
        Failure { code: EXIT_DATA, error: e.into() }
    }
}

pub type CmdResult = Result<(), Failure>;

#[derive(Debug, Parser)]
#[command(name = "xrguard", version, about = "Biometric privacy pipeline for XR face and eye tracking")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic session or a labeled corpus.
    Synth(synth::Args),
    /// Train the state classifier on a feature CSV.
    Train(train::Args),
    /// Score a model: accuracy, macro-F1, confusion, CV, importance.
    Eval(eval::Args),
    /// Classify and filter sessions into a redacted log.
    Run(run::Args),
    /// Attack raw and filtered logs and compare leakage.
    Audit(audit::Args),
    /// Measure per-window classify+filter latency.
    Bench(bench::Args),
}

/// Flags shared by the report-producing commands.
#[derive(Debug, clap::Args, Clone)]
pub struct Output {
    /// Write the primary artifact here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Machine-readable output.
    #[arg(long)]
    pub json: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => synth::cmd(a),
        Command::Train(a) => train::cmd(a),
        Command::Eval(a) => eval::cmd(a),
        Command::Run(a) => run::cmd(a),
        Command::Audit(a) => audit::cmd(a),
        Command::Bench(a) => bench::cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
