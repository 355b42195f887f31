//! `gridtc`: 24h optimal dispatch of unbalanced three-phase microgrids.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use gridtc_cli::{
    cmd_compare, cmd_powerflow, cmd_schedule, cmd_validate, resolve_bundle, ScheduleFlags,
    EXIT_PARSE,
};

#[derive(Parser)]
#[command(
    name = "gridtc",
    about = "Convex 24h dispatch of unbalanced three-phase microgrids",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a bundle and check every model invariant.
    Validate {
        /// Builtin bundle name (cigre, ieee123) or a bundle directory.
        bundle: String,
    },
    /// Solve the exact nonlinear power flow for one load snapshot.
    Powerflow {
        bundle: String,
        /// Period to evaluate (default: the peak-demand period).
        #[arg(long)]
        hour: Option<usize>,
        /// Load scaling factor.
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
    },
    /// Assemble and solve the 24h dispatch, audit it, optionally export CSVs.
    Schedule {
        bundle: String,
        #[command(flatten)]
        flags: FlagArgs,
    },
    /// Run the dispatch under every available solver adapter and tabulate.
    Compare {
        bundle: String,
        #[command(flatten)]
        flags: FlagArgs,
    },
}

#[derive(Args)]
struct FlagArgs {
    /// Scenario case: 1 allows surplus sale, 2 forbids it.
    #[arg(long)]
    case: Option<u8>,
    /// Voltage deviation limit, per-unit.
    #[arg(long)]
    delta: Option<f64>,
    /// Enable the static reserve with this duration in hours.
    #[arg(long)]
    reserve_tau: Option<f64>,
    /// Truncate the horizon to this many periods.
    #[arg(long)]
    horizon: Option<usize>,
    /// Override the period length in hours.
    #[arg(long)]
    dt: Option<f64>,
    /// Solver adapter: clarabel or admm.
    #[arg(long)]
    solver: Option<String>,
    /// Export result CSVs and metadata to this directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed recorded in metadata; used by randomized test generators only.
    #[arg(long)]
    seed: Option<u64>,
}

impl From<FlagArgs> for ScheduleFlags {
    fn from(f: FlagArgs) -> Self {
        ScheduleFlags {
            case: f.case,
            delta: f.delta,
            reserve_tau: f.reserve_tau,
            horizon: f.horizon,
            dt: f.dt,
            solver: f.solver,
            out: f.out,
            seed: f.seed,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Validate { bundle } => match resolve_bundle(&bundle) {
            Ok(b) => cmd_validate(&b),
            Err(e) => {
                eprintln!("{e}");
                EXIT_PARSE
            }
        },
        Command::Powerflow { bundle, hour, scale } => match resolve_bundle(&bundle) {
            Ok(b) => cmd_powerflow(&b, hour, scale),
            Err(e) => {
                eprintln!("{e}");
                EXIT_PARSE
            }
        },
        Command::Schedule { bundle, flags } => match resolve_bundle(&bundle) {
            Ok(b) => cmd_schedule(&b, &flags.into()),
            Err(e) => {
                eprintln!("{e}");
                EXIT_PARSE
            }
        },
        Command::Compare { bundle, flags } => match resolve_bundle(&bundle) {
            Ok(b) => cmd_compare(&b, &flags.into()),
            Err(e) => {
                eprintln!("{e}");
                EXIT_PARSE
            }
        },
    };
    ExitCode::from(code as u8)
}
