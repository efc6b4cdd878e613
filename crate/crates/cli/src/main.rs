use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use soze_cli::commands::{cmd_oracle, cmd_run, cmd_sweep};
use soze_cli::CliError;

/// Fluid-model simulator and verifier for Söze weighted bandwidth allocation.
#[derive(Parser)]
#[command(name = "soze", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and write the trace CSV and summary JSON.
    Run {
        /// Scenario file, or the name of a built-in scenario.
        scenario: String,
        /// Override a scenario field, e.g. `control.m=1.5` or `flows.0.weight=3`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Run one simulation per parameter value and print a row for each.
    Sweep {
        scenario: String,
        /// One of m, p, k, flow_count, K, initial_rate.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        values: Vec<String>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Write each run's trace and summary under this directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the weighted max-min allocation of every epoch without simulating.
    Oracle {
        scenario: String,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut stdout = std::io::stdout().lock();
    let result: Result<(), CliError> = match cli.command {
        Command::Run { scenario, set, out } => cmd_run(&scenario, &set, &out, &mut stdout).map(drop),
        Command::Sweep {
            scenario,
            param,
            values,
            set,
            out,
        } => cmd_sweep(&scenario, &param, &values, &set, out.as_deref(), &mut stdout).map(drop),
        Command::Oracle { scenario, set } => cmd_oracle(&scenario, &set, &mut stdout).map(drop),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
