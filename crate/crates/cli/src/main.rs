//! `augsync` command-line interface.
//!
//! Exit codes: 0 success, 1 analysis refutation or failure (refuted certificate, infeasible
//! fit, Newton divergence), 2 input error.

mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "augsync", version, about = "Power-system DAE simulation and augmented-synchronization analysis")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// MATPOWER-style case file; defaults to the bundled 9-bus case.
    #[arg(long, global = true)]
    pub case: Option<PathBuf>,
    /// Device parameter file; defaults to the bundled 9-bus devices.
    #[arg(long, global = true)]
    pub devices: Option<PathBuf>,
    /// Worker threads for sampling (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output file for the report or CSV (default: stdout).
    #[arg(long, short, global = true)]
    pub out: Option<PathBuf>,
    /// Overrides the sampler seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve for an equilibrium.
    Equilibrium {
        /// Fix one state, e.g. `zeta=0`.
        #[arg(long)]
        pin: Option<String>,
        /// Also write the equilibrium as a state file.
        #[arg(long)]
        state_out: Option<PathBuf>,
    },
    /// Trace equilibria over a range of one state.
    Continuum {
        #[arg(long, default_value = "zeta")]
        param: String,
        /// `lo:hi:step`
        #[arg(long, allow_hyphen_values = true)]
        range: String,
    },
    /// Integrate from a state file.
    Simulate {
        #[arg(long)]
        from: PathBuf,
        #[arg(long)]
        t_end: Option<f64>,
        /// Attach V = fᵀPf from this matrix file (or `bundled:fitted` / `bundled:reference`).
        #[arg(long)]
        p: Option<String>,
        /// Also write a summary report (Properties 1 and 2, ẋ₂ identity residual).
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Detectability verdict; with a trajectory also non-degeneracy and the ẋ₂ identity.
    Detectability {
        #[arg(long)]
        trajectory: Option<PathBuf>,
    },
    /// Region-of-attraction certificates.
    Roa {
        #[command(subcommand)]
        action: RoaAction,
    },
    /// Certificate, detectability and the combined convergence claim.
    Verdict {
        #[arg(long)]
        p: Option<String>,
        #[arg(long)]
        level: Option<f64>,
        #[arg(long)]
        pin: Option<String>,
    },
    /// Vector field projected on a plane through the equilibrium.
    Field {
        /// `s1,s2` for the built-in 9-bus directions, or a two-row matrix file.
        #[arg(long, default_value = "s1,s2")]
        plane: String,
        #[arg(long, default_value_t = 21)]
        grid: usize,
        /// Half-extent of the grid along both directions.
        #[arg(long, default_value_t = 0.1)]
        extent: f64,
        #[arg(long)]
        pin: Option<String>,
    },
}

#[derive(Debug, Subcommand)]
pub enum RoaAction {
    /// Fit P on samples from a box around the equilibrium.
    FitP {
        /// Where to write the fitted matrix.
        #[arg(long)]
        p_out: Option<PathBuf>,
        #[arg(long)]
        pin: Option<String>,
    },
    /// Sampled certificate of {fᵀPf ≤ level}.
    Certify {
        #[arg(long)]
        p: Option<String>,
        #[arg(long)]
        level: Option<f64>,
        #[arg(long)]
        pin: Option<String>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code_for(&e))
        }
    }
}
