//! `ghostgame`: solve and verify preemption games with uncertain competition.
//!
//! Exit codes: 0 success, 1 a verification verdict failed, 2 bad usage,
//! configuration or a solver error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ghostgame::sim::Monitoring;

use crate::config::RunConfig;

#[derive(Parser)]
#[command(name = "ghostgame", version, about, long_about = None)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Configuration file (`key = value` lines, `#` comments)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for CSV output
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of Monte Carlo paths
    #[arg(long, global = true)]
    paths: Option<usize>,
    /// Grid step of the simulated paths
    #[arg(long, global = true)]
    dt: Option<f64>,
    /// Running maximum between grid points: `bridge` or `grid`
    #[arg(long, global = true)]
    monitoring: Option<Monitoring>,
    /// Override any configuration key, e.g. `--set p1=0.2`
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Print nothing on success
    #[arg(long, short, global = true)]
    quiet: bool,
    /// Multiply u1 inside M1 by this factor (negative control)
    #[arg(long, global = true, hide = true)]
    perturb_u1: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Roots of the characteristic equation
    Roots {
        #[arg(long, allow_hyphen_values = true)]
        mu: Option<f64>,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        r: Option<f64>,
    },
    /// Equilibrium values u1, u2 over a state grid (value.csv)
    Value,
    /// Equilibrium boundary b over a state grid (boundary.csv)
    Boundary,
    /// One sample path with beliefs and controls (path.csv) and Monte Carlo
    /// value estimates (estimates.csv)
    Simulate,
    /// Martingale diagnostics and deviation tests (diagnostics.csv,
    /// deviations.csv, indifference.csv)
    Verify,
}

fn load(common: &Common) -> anyhow::Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    cfg.apply(common.set.iter().map(String::as_str))?;
    if let Some(out) = &common.out {
        cfg.out = out.clone();
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(paths) = common.paths {
        cfg.paths = paths;
    }
    if let Some(dt) = common.dt {
        cfg.dt = dt;
    }
    if let Some(m) = common.monitoring {
        cfg.monitoring = m;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    let mut cfg = load(&cli.common)?;
    let quiet = cli.common.quiet;
    match cli.command {
        Command::Roots { mu, sigma, r } => {
            cfg.mu = mu.unwrap_or(cfg.mu);
            cfg.sigma = sigma.unwrap_or(cfg.sigma);
            cfg.r = r.unwrap_or(cfg.r);
            commands::roots(&cfg, quiet)?;
            Ok(true)
        }
        Command::Value => commands::value(&cfg, quiet).map(|_| true),
        Command::Boundary => commands::boundary(&cfg, quiet).map(|_| true),
        Command::Simulate => commands::simulate(&cfg, quiet).map(|_| true),
        Command::Verify => commands::verify(&cfg, cli.common.perturb_u1, quiet),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
