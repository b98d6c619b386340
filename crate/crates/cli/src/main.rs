//! `serrin-lab`: find a branch of periodic Serrin domains, certify the
//! Cheeger identity and calibration on it, and build the constant mean
//! curvature graphs.
//!
//! Exit codes: 0 success, 2 configuration or input error, 3 solver failure.

// `!(x > 0.0)` guards reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{Grid, RunConfig};
use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "serrin-lab", version, about = "Periodic Serrin domains, Cheeger certificates and CMC graphs")]
struct Cli {
    /// TOML configuration; every field has a default.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Threads across branch points.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true)]
    tol_identity: Option<f64>,
    /// Threshold of the calibration divergence, boundary and wall residuals.
    #[arg(long, global = true)]
    tol_calib: Option<f64>,
    /// Grid of the current stage, `NRHOxNT`.
    #[arg(long, global = true)]
    grid: Option<Grid>,
    /// Comma-separated, strictly decreasing ε values.
    #[arg(long, global = true, value_delimiter = ',')]
    eps_list: Option<Vec<f64>>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Locate the bifurcation period and continue the branch from the cylinder.
    FindSerrin {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        radius: Option<f64>,
        #[arg(long)]
        s_max: Option<f64>,
        #[arg(long)]
        ds: Option<f64>,
        #[arg(long)]
        modes: Option<usize>,
    },
    /// Certify the Cheeger identity and the calibration on every branch point.
    Certify {
        /// Branch file (default: OUT/branch.json).
        branch: Option<PathBuf>,
        /// Also run the relaxed total-variation minimization.
        #[arg(long)]
        tv: bool,
    },
    /// Solve the shrinking-domain CMC problems on every branch point.
    SolveCmc {
        /// Branch file (default: OUT/branch.json).
        branch: Option<PathBuf>,
    },
    /// Join the artifacts of the output directory into one table.
    Report,
}

fn build_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut c = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &cli.out {
        c.out = out.clone();
    }
    if let Some(w) = cli.workers {
        c.workers = w;
    }
    if let Some(t) = cli.tol_identity {
        c.certify.tol_identity = t;
    }
    if let Some(t) = cli.tol_calib {
        c.certify.tol_calib = t;
    }
    if let Some(eps) = &cli.eps_list {
        c.cmc.eps_list = eps.clone();
    }
    match &cli.command {
        Command::FindSerrin {
            n,
            radius,
            s_max,
            ds,
            modes,
        } => {
            let s = &mut c.serrin;
            s.n = n.unwrap_or(s.n);
            s.radius = radius.unwrap_or(s.radius);
            s.s_max = s_max.unwrap_or(s.s_max);
            s.ds = ds.unwrap_or(s.ds);
            s.modes = modes.unwrap_or(s.modes);
            s.grid = cli.grid.unwrap_or(s.grid);
        }
        Command::Certify { tv, .. } => {
            c.certify.grid = cli.grid.unwrap_or(c.certify.grid);
            c.certify.tv |= *tv;
        }
        Command::SolveCmc { .. } => c.cmc.grid = cli.grid.unwrap_or(c.cmc.grid),
        Command::Report => {}
    }
    c.validate()?;
    Ok(c)
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let config = build_config(cli)?;
    match &cli.command {
        Command::FindSerrin { .. } => commands::find_serrin(&config),
        Command::Certify { branch, .. } => commands::certify(&config, branch.as_deref()),
        Command::SolveCmc { branch } => commands::solve_cmc(&config, branch.as_deref()),
        Command::Report => commands::report(&config),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
