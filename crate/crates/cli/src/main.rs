use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dthawkes_cli::commands::{
    cmd_figure, cmd_limits, cmd_oracle, cmd_seol, cmd_simulate, cmd_verify, exit_code, CliError,
};
use dthawkes_cli::config::{ConfigError, Overrides, RunConfig};

/// Discrete-time marked Hawkes process: simulation, closed-form limits, and
/// statistical verification.
#[derive(Debug, Parser)]
#[command(name = "dthawkes", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Run configuration file (key = value lines with dotted sections).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Override simulation.master_seed.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,

    /// Override simulation.workers (ensemble thread count).
    #[arg(long, global = true, value_name = "N")]
    workers: Option<usize>,

    /// Override output.directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Suppress the timestamp field in JSON documents (for golden files).
    #[arg(long, global = true)]
    no_timestamp: bool,

    /// Override verification.significance.
    #[arg(long, global = true, value_name = "FLOAT")]
    significance: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the closed-form limits and bound certificates.
    Limits,
    /// Generate an ensemble and write terminal (and optional series) CSVs.
    Simulate,
    /// Run the selected statistical checks and write the JSON verdict.
    Verify {
        /// Replace the CLT target variance for the count statistic.
        #[arg(long, value_name = "FLOAT")]
        sigma2_counts: Option<f64>,
        /// Replace the CLT target variance for the mark statistic.
        #[arg(long, value_name = "FLOAT")]
        sigma2_marks: Option<f64>,
    },
    /// Emit histogram + overlay density data for the normalized statistics.
    Figure,
    /// Simulate and verify the 0-1 baseline process.
    Seol,
    /// Cross-check the simulator against exhaustive enumeration.
    Oracle,
}

fn run(cli: Cli) -> Result<bool, CliError> {
    let overrides = Overrides {
        seed: cli.seed,
        workers: cli.workers,
        out: cli.out.clone(),
        significance: cli.significance,
        no_timestamp: cli.no_timestamp,
        sigma2_counts: match &cli.command {
            Command::Verify { sigma2_counts, .. } => *sigma2_counts,
            _ => None,
        },
        sigma2_marks: match &cli.command {
            Command::Verify { sigma2_marks, .. } => *sigma2_marks,
            _ => None,
        },
    };
    let config_path = cli
        .config
        .as_deref()
        .ok_or_else(|| ConfigError::Invalid("--config PATH is required".into()))?;
    let config = RunConfig::from_file(config_path, &overrides)?;
    match cli.command {
        Command::Limits => cmd_limits(&config),
        Command::Simulate => cmd_simulate(&config),
        Command::Verify { .. } => cmd_verify(&config),
        Command::Figure => cmd_figure(&config),
        Command::Seol => cmd_seol(&config),
        Command::Oracle => cmd_oracle(&config),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err) as u8)
        }
    }
}
