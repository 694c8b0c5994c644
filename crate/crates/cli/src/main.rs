//! `slitflight`: solve, integrate and bin double-slit time-of-flight runs.
//!
//! Exit status: 0 success, 1 invalid input, 2 numerical failure, 3 I/O,
//! 4 when `validate` completes but a check fails.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use slitflight::SimError;

#[derive(Parser, Debug)]
#[command(name = "slitflight", version, about = "Bohmian time-of-flight double-slit simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve, integrate the ensemble and write events, histogram, flux and manifest.
    Simulate(RunArgs),
    /// Solve and write the binned flux through the screen only.
    Flux(RunArgs),
    /// Run the invariant suite and print a pass/fail table.
    Validate(RunArgs),
}

#[derive(Args, Debug, Clone)]
pub struct RunArgs {
    /// Named preset (fig2, fig3d, fig3e, fig3f, fig4a, fig4b, free-gaussian).
    #[arg(long, conflicts_with = "config", required_unless_present = "config")]
    pub preset: Option<String>,
    /// key=value configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// RNG seed for the initial ensemble (required by simulate and validate).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of trajectories (overrides the scenario).
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub n: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "slitflight-out")]
    pub out: PathBuf,
    /// Number of x bins; must be given together with --bins-t.
    #[arg(long, requires = "bins_t", value_parser = clap::value_parser!(u64).range(1..))]
    pub bins_x: Option<u64>,
    /// Number of t bins; must be given together with --bins-x.
    #[arg(long, requires = "bins_x", value_parser = clap::value_parser!(u64).range(1..))]
    pub bins_t: Option<u64>,
    /// Reuse a stored wave history instead of solving.
    #[arg(long, conflicts_with = "dump_history")]
    pub history: Option<PathBuf>,
    /// Store the wave history while solving.
    #[arg(long)]
    pub dump_history: Option<PathBuf>,
}

/// Failure of a command, with its exit status.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Sim(SimError),
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        CliError::Sim(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Sim(SimError::Io(e))
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Sim(e) => match e {
                SimError::Validation(_)
                | SimError::GridTooSmall(_)
                | SimError::UnknownPreset(_)
                | SimError::Parse { .. }
                | SimError::BinMismatch => 1,
                SimError::NormDrift { .. }
                | SimError::OutOfMemory { .. }
                | SimError::NodeEncounter { .. }
                | SimError::OutsideGrid { .. }
                | SimError::OutsideHistory { .. } => 2,
                SimError::Io(_) | SimError::HistoryFormat(_) => 3,
            },
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Sim(e) => write!(f, "{e}"),
        }
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("TOF_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n >= 1)
        .ok_or_else(|| CliError::Usage(format!("TOF_THREADS must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot size the worker pool: {e}")))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = configure_threads().and_then(|()| match &cli.command {
        Command::Simulate(args) => commands::simulate(args),
        Command::Flux(args) => commands::flux(args),
        Command::Validate(args) => commands::validate(args),
    });
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
