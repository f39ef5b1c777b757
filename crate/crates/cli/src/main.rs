//! `panelpower`: power and sample-size calculations for staggered panel designs.
//!
//! Exit codes: 0 success, 2 invalid input, 3 tolerance breach, 4 environment
//! (I/O, bind) failure.

mod args;
mod commands;
mod manifest;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use panelpower_core::Error;

use args::ScenarioArgs;

#[derive(Debug, Parser)]
#[command(name = "panelpower", version, about = "Power and sample-size calculations for staggered panel designs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Minimum detectable effect for a fixed design
    Mde {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Clusters needed to reach a target MDE
    Clusters {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Recompute the reference sample-size table and flag each cell
    Table3 {
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Design effects of staggering and autocorrelation (plot data)
    Figure1(commands::Figure1Args),
    /// Monte Carlo check of the closed-form variances
    Validate(commands::ValidateArgs),
    /// Run the HTTP service
    Serve(commands::ServeArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct OutputArgs {
    /// Emit JSON with the run manifest
    #[arg(long, conflicts_with = "csv")]
    pub json: bool,
    /// Emit CSV headed by the run manifest
    #[arg(long)]
    pub csv: bool,
    /// Write to a file instead of stdout
    #[arg(long, short, value_name = "PATH")]
    pub output: Option<PathBuf>,
}

#[derive(Debug)]
pub enum CliError {
    Engine(Error),
    Input { code: &'static str, message: String },
    Breach(String),
    Environment(String),
}

impl CliError {
    fn invalid_json(path: &Path, e: serde_json::Error) -> Self {
        CliError::Input { code: "INVALID_JSON", message: format!("{}: {e}", path.display()) }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Engine(_) | CliError::Input { .. } => 2,
            CliError::Breach(_) => 3,
            CliError::Environment(_) => 4,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Engine(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Environment(e.to_string())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Engine(e) => match e.field() {
                Some(field) => write!(f, "error[{}]: {e} (field {field})", e.code()),
                None => write!(f, "error[{}]: {e}", e.code()),
            },
            CliError::Input { code, message } => write!(f, "error[{code}]: {message}"),
            CliError::Breach(msg) => write!(f, "tolerance breach: {msg}"),
            CliError::Environment(msg) => write!(f, "error[ENVIRONMENT]: {msg}"),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Mde { scenario, output } => commands::mde(scenario, output),
        Command::Clusters { scenario, output } => commands::clusters(scenario, output),
        Command::Table3 { output } => commands::table3(output),
        Command::Figure1(a) => commands::figure1(a),
        Command::Validate(a) => commands::validate(a),
        Command::Serve(a) => commands::serve(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
