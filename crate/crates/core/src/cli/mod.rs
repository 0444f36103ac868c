//! Command-line front end.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use commands::SteadyChoice;

#[derive(Debug, Parser)]
#[command(name = "actin-edge", version, about = "Filament-end densities along the leading edge")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MethodArg {
    March,
    Shooting,
    Perturbative,
    Constant,
}

impl From<MethodArg> for SteadyChoice {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::March => SteadyChoice::March,
            MethodArg::Shooting => SteadyChoice::Shooting,
            MethodArg::Perturbative => SteadyChoice::Perturbative,
            MethodArg::Constant => SteadyChoice::Constant,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate in time; writes trajectory.csv, diagnostics.csv, metadata.json
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute a steady state; writes profile.csv and steady.json
    Steady {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        method: MethodArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Bifurcation value, normal-form coefficients and branch slope
    Bifurcation {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Lyapunov functional along a run; writes lyapunov.csv and rate.json
    Lyapunov {
        #[arg(long)]
        config: PathBuf,
        /// Steady reference `x,u_bar,v_bar` (computed when omitted)
        #[arg(long)]
        steady: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Classify long-time behaviour over a list of alpha values
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Perturbative vs time-marched periodic steady state for
    /// c(x) = 1 + (3 eps / 4) cos(2 pi x)
    ReproduceFig3 {
        #[arg(long, default_value_t = 10.0)]
        alpha: f64,
        #[arg(long, default_value_t = 0.1)]
        eps: f64,
        #[arg(long, default_value_t = 400)]
        n_cells: usize,
        #[arg(long, default_value = "fig3")]
        out: PathBuf,
    },
}

/// Runs one command and returns a line for stdout.
pub fn run(cli: Cli) -> crate::Result<String> {
    let wrote = |dir: PathBuf| format!("wrote {}", dir.display());
    match cli.command {
        Command::Simulate { config, out } => commands::simulate_cmd(&config, out.as_deref()).map(wrote),
        Command::Steady { config, method, out } => {
            commands::steady_cmd(&config, method.into(), out.as_deref()).map(wrote)
        }
        Command::Bifurcation { config, out } => commands::bifurcation_cmd(&config, out.as_deref()),
        Command::Lyapunov { config, steady, out } => {
            commands::lyapunov_cmd(&config, steady.as_deref(), out.as_deref()).map(wrote)
        }
        Command::Sweep { config, workers, out } => {
            commands::sweep_cmd(&config, workers, out.as_deref()).map(wrote)
        }
        Command::ReproduceFig3 {
            alpha,
            eps,
            n_cells,
            out,
        } => commands::reproduce_fig3_cmd(alpha, eps, n_cells, &out).map(wrote),
    }
}
