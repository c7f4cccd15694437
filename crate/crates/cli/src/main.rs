//! `degenwave`: command-line front end for the degenerate wave toolkit.

mod commands;
mod config;
mod output;

use std::path::Path;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{Flags, RunConfig};

#[derive(Parser)]
#[command(
    name = "degenwave",
    version,
    about = "Simulate, observe and control the interior-degenerate wave equation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the multiplier constants a, hat a, b, c, P, theta, T*.
    Constants(Flags),
    /// Compute eigenpairs and write the eigenvalue table.
    Eigen {
        #[command(flatten)]
        flags: Flags,
        /// Also write the operator in coordinate text format.
        #[arg(long)]
        export_matrix: bool,
    },
    /// Run one simulation and write energy and boundary-flux traces.
    Simulate(Flags),
    /// Compare regularized runs with the degenerate one over an epsilon list.
    Approx(Flags),
    /// Observability quotients against the predicted constants.
    Observe(Flags),
    /// Synthesize a boundary null control and verify it.
    Hum(Flags),
    /// Run the invariant suite; exits 1 on any failure.
    Verify {
        #[command(flatten)]
        flags: Flags,
        /// Include the long criteria (approximation, observability, HUM).
        #[arg(long)]
        full: bool,
    },
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Solver(String),
    Verify(String),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Solver(format!("{}: {e}", path.display()))
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Verify(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Solver(m) => write!(f, "solver error: {m}"),
            CliError::Verify(m) => write!(f, "verification failed: {m}"),
        }
    }
}

impl From<degenwave_core::Error> for CliError {
    fn from(e: degenwave_core::Error) -> Self {
        use degenwave_core::Error as E;
        match e {
            E::InvalidParameter(_) | E::HorizonTooShort { .. } | E::RequiresRegularization => {
                CliError::Config(e.to_string())
            }
            other => CliError::Solver(other.to_string()),
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let env_out = std::env::var_os("DEGENWAVE_OUT").map(Into::into);
    let resolve = |name: &str, flags: &Flags| RunConfig::resolve(name, flags, env_out.clone());
    match cli.command {
        Command::Constants(f) => commands::constants(&resolve("constants", &f)?),
        Command::Eigen {
            flags,
            export_matrix,
        } => commands::eigen(&resolve("eigen", &flags)?, export_matrix),
        Command::Simulate(f) => commands::simulate(&resolve("simulate", &f)?),
        Command::Approx(f) => commands::approx(&resolve("approx", &f)?),
        Command::Observe(f) => commands::observe(&resolve("observe", &f)?),
        Command::Hum(f) => commands::hum(&resolve("hum", &f)?),
        Command::Verify { flags, full } => commands::verify(&resolve("verify", &flags)?, full),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("degenwave: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
