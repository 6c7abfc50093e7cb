//! `setmerge` command line: merge user-supplied uncertainty sets from a JSON
//! request, run the simulation lab, or emit synthetic multiple-testing
//! statistics.
//!
//! Exit codes: 0 success, 2 parse/schema error, 3 semantic validation error.

mod request;
mod simulate;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

const EXIT_PARSE: u8 = 2;
const EXIT_VALIDATION: u8 = 3;

#[derive(Parser)]
#[command(name = "setmerge", version, about = "Merge uncertainty sets with coverage guarantees")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Merge the studies described in a JSON request file.
    Merge {
        /// Path to the JSON request.
        #[arg(long = "in")]
        input: String,
        /// Output path; stdout when omitted.
        #[arg(long)]
        out: Option<String>,
        /// Override the request's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the request's target level.
        #[arg(long)]
        alpha: Option<f64>,
        /// Override the request's e-mode threshold adjustment.
        #[arg(long)]
        tau: Option<f64>,
    },
    /// Run a simulation-lab experiment and write its CSV.
    Simulate {
        #[command(subcommand)]
        experiment: simulate::Experiment,
    },
    /// Emit synthetic p/e-values for rejection-set studies.
    MtSynth {
        /// Path to the JSON request.
        #[arg(long = "in")]
        input: String,
        /// Output path; stdout when omitted.
        #[arg(long)]
        out: Option<String>,
    },
}

/// Failures mapped to the documented exit codes.
pub enum CliError {
    /// Malformed input: bad JSON, unknown fields, wrong shapes.
    Parse(String),
    /// Well-formed but semantically invalid input.
    Validation(String),
}

impl From<setmerge::Error> for CliError {
    fn from(e: setmerge::Error) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Parse(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

fn write_output(out: Option<&str>, body: &str) -> CliResult<()> {
    match out {
        Some(path) => std::fs::write(path, body)?,
        None => print!("{body}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Merge { input, out, seed, alpha, tau } => {
            request::cmd_merge(&input, out.as_deref(), seed, alpha, tau)
        }
        Command::Simulate { experiment } => simulate::cmd_simulate(experiment),
        Command::MtSynth { input, out } => request::cmd_mt_synth(&input, out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Parse(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_PARSE)
        }
        Err(CliError::Validation(msg)) => {
            eprintln!("validation error: {msg}");
            ExitCode::from(EXIT_VALIDATION)
        }
    }
}
