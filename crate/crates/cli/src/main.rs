mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use vekua::VekuaError;

#[derive(Parser, Debug)]
#[command(name = "vekua", version, about = "Mode-by-mode analysis of Vekua-type operators on tori and the 3-sphere")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Operator config (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Output file; sibling files are derived from it.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Weight cutoff ⟨ξ⟩ ≤ cutoff. Overrides the config value.
    #[arg(long)]
    pub cutoff: Option<f64>,
    /// Zero tolerance. Overrides the config value.
    #[arg(long)]
    pub zero_tol: Option<f64>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    GhZero,
    GhNecessity,
    GsFail,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Scan the discriminant and report zeros and small-divisor bounds.
    Classify {
        #[command(flatten)]
        common: Common,
    },
    /// Solve Pu = f for a coefficient (or time-coefficient) field.
    Solve {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        rhs: PathBuf,
        /// Time grid size for time-dependent operators.
        #[arg(long)]
        grid: Option<usize>,
    },
    /// Build a witness field showing a failure of solvability or smoothness.
    Witness {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long, default_value_t = 20)]
        modes: usize,
        /// Constant c of the necessity witness, as "re,im".
        #[arg(long, default_value = "1,0")]
        coeff: String,
    },
    /// Check the hypotheses of the time-dependent solver.
    OdeCheck {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        grid: Option<usize>,
    },
    /// Fit a power-law decay bound to a field.
    Decay {
        #[command(flatten)]
        common: Common,
        #[arg(long, alias = "field")]
        rhs: PathBuf,
        #[arg(long)]
        grid: Option<usize>,
    },
}

/// Process exit codes.
pub mod exit {
    pub const OK: u8 = 0;
    pub const ERROR: u8 = 1;
    pub const ZEROS: u8 = 2;
    pub const INADMISSIBLE: u8 = 3;
    pub const HYPOTHESIS: u8 = 4;
    pub const NO_WITNESS: u8 = 5;
}

fn error_code(e: &VekuaError) -> u8 {
    match e {
        VekuaError::Inadmissible(_) => exit::INADMISSIBLE,
        VekuaError::Hypothesis { .. } | VekuaError::BoundaryDenominator(_) | VekuaError::ModeFailures(_) => {
            exit::HYPOTHESIS
        }
        _ => exit::ERROR,
    }
}

fn init_threads() {
    let Ok(v) = std::env::var("VEKUA_THREADS") else { return };
    match v.trim().parse::<usize>() {
        Ok(n) if n > 0 => {
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                eprintln!("warning: VEKUA_THREADS ignored: {e}");
            }
        }
        _ => eprintln!("warning: VEKUA_THREADS={v} is not a positive integer; ignored"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_threads();
    let result = match cli.command {
        Command::Classify { common } => commands::classify(&common),
        Command::Solve { common, rhs, grid } => commands::solve(&common, &rhs, grid),
        Command::Witness { common, kind, modes, coeff } => commands::witness(&common, kind, modes, &coeff),
        Command::OdeCheck { common, grid } => commands::ode_check(&common, grid),
        Command::Decay { common, rhs, grid } => commands::decay(&common, &rhs, grid),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(error_code(&e))
        }
    }
}
