mod commands;
mod config;

use std::process::ExitCode;
use std::sync::LazyLock;

use clap::{Parser, Subcommand};
use thiserror::Error;

use commands::{AppArgs, FisherArgs, FitArgs, GridArgs, SimulateArgs, StudyArgs, ValidateArgs};

static VERSION: LazyLock<String> = LazyLock::new(|| {
    format!(
        "{} (tdof-core {}, study format {})",
        env!("CARGO_PKG_VERSION"),
        tdof_core::VERSION,
        tdof_core::simstudy::FORMAT_VERSION
    )
});

#[derive(Debug, Parser)]
#[command(name = "tdof", version = VERSION.as_str(), about = "Samplers for the Student-t degrees of freedom")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate standard Student-t observations.
    Simulate(SimulateArgs),
    /// Run a group of chains on one data set.
    Fit(FitArgs),
    /// Run or resume the simulation study.
    Study(StudyArgs),
    /// Map I_u − I_τ over a (y, ν) grid.
    Fisher(FisherArgs),
    /// Joint-distribution test of a sampler.
    Validate(ValidateArgs),
    /// Fit the trend-cycle model to annual macro series.
    App(AppArgs),
    /// Evaluate a joint posterior density on a lattice.
    Grid(GridArgs),
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{context}: {source}")]
    Core {
        context: String,
        source: tdof_core::Error,
    },
    /// The command ran but its check did not pass.
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn core(context: impl Into<String>, source: tdof_core::Error) -> Self {
        CliError::Core {
            context: context.into(),
            source,
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Failed(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Core { source, .. } if source.is_numeric() => 3,
            CliError::Core { .. } => 2,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Fit(a) => commands::fit(a),
        Command::Study(a) => commands::study(a),
        Command::Fisher(a) => commands::fisher(a),
        Command::Validate(a) => commands::validate(a),
        Command::App(a) => commands::app(a),
        Command::Grid(a) => commands::grid(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("tdof: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
