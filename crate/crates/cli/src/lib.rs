//! Command-line front end: configuration, orchestration and reports.

pub mod commands;
pub mod config;
pub mod report;
pub mod sweep;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::commands::{Failure, Outcome, EXIT_INVALID, EXIT_OK};
use crate::config::{BranchChoice, RunConfig};
use crate::sweep::SweepParam;

#[derive(Debug, Parser)]
#[command(name = "grushin", version, about = "Concave-convex problems for the Grushin operator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the problem hypotheses.
    Validate(ConfigArg),
    /// Minimize on the Nehari sheets (subcritical regime).
    Solve {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, value_enum)]
        branch: Option<BranchChoice>,
    },
    /// Fibering map along the ray of the starting field.
    Fibering {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, default_value_t = 201)]
        samples: usize,
    },
    /// Embedding constants by Rayleigh quotient descent.
    Sobolev(ConfigArg),
    /// Bubble family on the grid and its integral asymptotics.
    Bubble(ConfigArg),
    /// Bubble energy levels against the compactness threshold.
    MplGap(ConfigArg),
    /// Local minimizer and mountain pass (critical regime).
    SolveCritical(ConfigArg),
    /// Repeats a solve over several parameter values.
    Sweep {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, value_enum)]
        param: SweepParam,
        #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
        values: Vec<f64>,
        /// Concurrent runs; 0 uses the available parallelism.
        #[arg(long, default_value_t = 0)]
        workers: usize,
    },
}

#[derive(Debug, clap::Args)]
pub struct ConfigArg {
    /// TOML run configuration.
    #[arg(long, short)]
    pub config: PathBuf,
}

impl ConfigArg {
    fn load(&self) -> Result<RunConfig, Failure> {
        RunConfig::load(&self.config).map_err(|e| Failure::new(EXIT_INVALID, e.to_string()))
    }
}

pub fn execute(cmd: &Command) -> Result<Outcome, Failure> {
    use commands::*;
    match cmd {
        Command::Validate(c) => validate_cmd(&c.load()?),
        Command::Solve { config, branch } => solve(&config.load()?, *branch),
        Command::Fibering { config, samples } => fibering(&config.load()?, *samples),
        Command::Sobolev(c) => sobolev(&c.load()?),
        Command::Bubble(c) => bubble(&c.load()?, None),
        Command::MplGap(c) => mpl_gap(&c.load()?, None),
        Command::SolveCritical(c) => solve_critical(&c.load()?, None),
        Command::Sweep {
            config,
            param,
            values,
            workers,
        } => sweep::run(&config.load()?, *param, values, *workers),
    }
}

/// Parses `argv` (program name first), runs the subcommand, prints the
/// summary or the error, and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    match execute(&cli.command) {
        Ok(out) => {
            println!("{}", out.summary);
            EXIT_OK
        }
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}
