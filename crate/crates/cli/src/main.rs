//! qjump: stochastic wave-function simulation of time-local master
//! equations, specialized to the damped Jaynes–Cummings model.
//!
//! Subcommands: `rates` (coefficient curves), `decay` (reference population
//! curves), `simulate` (trajectory ensembles), `validate` (cross-oracle
//! check suite). Exit codes: 0 success, 1 usage or configuration error,
//! 2 validation failure, 3 runtime numeric or I/O error.

mod commands;
mod config;
mod error;
mod output;
mod validation;

use clap::{Parser, Subcommand};

use crate::config::RunArgs;
use crate::error::CliError;
use crate::validation::FaultInjection;

#[derive(Parser)]
#[command(
    name = "qjump",
    version,
    about = "Jump-process unraveling of time-local open-system dynamics",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Emit decay-rate and Lamb-shift coefficients on a time grid.
    Rates(RunArgs),
    /// Emit a reference excited-state population curve.
    Decay(RunArgs),
    /// Run a stochastic trajectory ensemble and emit the estimate.
    Simulate(RunArgs),
    /// Run the cross-oracle validation suite.
    Validate {
        /// Perturb the closed-form γ⁽⁴⁾ to confirm the harness catches it.
        #[arg(long, hide = true)]
        inject_gamma4_offset: Option<f64>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Rates(args) => commands::cmd_rates(&config::resolve(&args)?),
        Command::Decay(args) => commands::cmd_decay(&config::resolve(&args)?),
        Command::Simulate(args) => commands::cmd_simulate(&config::resolve(&args)?),
        Command::Validate { inject_gamma4_offset } => {
            let fault = match inject_gamma4_offset {
                Some(off) => FaultInjection::Gamma4Offset(off),
                None => FaultInjection::None,
            };
            validation::cmd_validate(fault)
        }
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests exit 0; anything else is a usage
            // error. Exit code 1 (not clap's default 2): 2 is reserved for
            // validation failures.
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(err) = run(cli) {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code().into());
    }
}
