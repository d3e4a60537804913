//! `epismc` — simulation, particle filtering, likelihood surfaces, and
//! Bayesian inference for agent-level SIS/SIR count models.
//!
//! Every subcommand reads a JSON config (`--config`), derives all of its
//! randomness from a single root seed (`--seed`), and writes its results
//! to `--out`. Replicates and grid points run on a rayon pool sized by
//! `--threads`; `--threads 1` is the sequential determinism contract.

mod config;
mod csvout;
mod estimator;
mod filter;
mod mcmc;
mod oracle_check;
mod predict;
mod simulate;
mod surface;

use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Parser, Subcommand};

use crate::config::load_config;

#[derive(Parser)]
#[command(
    name = "epismc",
    version,
    about = "Exact and particle inference for agent-level epidemic count models"
)]
struct Cli {
    /// JSON configuration file for the subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Root seed; every random stream is derived from it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Worker threads for replicates and grid points (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    /// Output path: JSON for simulate, CSV for the other commands,
    /// optional text report for oracle-check.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw observations (optionally with the latent truth) from a model.
    Simulate,
    /// Run a particle filter over replicates with per-step diagnostics.
    Filter,
    /// Evaluate the estimated log-likelihood over a 2-D parameter grid.
    Surface,
    /// Pseudo-marginal random-walk chains over model parameters.
    Pmmh,
    /// Latent-path Gibbs sampler with optional parameter updates (SIS only).
    Gibbs,
    /// Posterior-predictive count quantiles past an observation cutoff (SIS only).
    Predict,
    /// Exact-reference validation suites at small guarded sizes.
    OracleCheck,
}

fn required_config(path: Option<&Path>) -> anyhow::Result<&Path> {
    path.context("--config is required for this command")
}

fn required_out(path: Option<&Path>) -> anyhow::Result<&Path> {
    path.context("--out is required for this command")
}

fn main() {
    if let Err(err) = run(Cli::parse()) {
        eprintln!("error: {err:#}");
        std::process::exit(2);
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .context("initialising the worker pool")?;
    }

    let config_path = cli.config.as_deref();
    let out_path = cli.out.as_deref();
    let seed = cli.seed;

    match cli.command {
        Command::Simulate => {
            let config = load_config(required_config(config_path)?)?;
            simulate::run(&config, seed, required_out(out_path)?)
        }
        Command::Filter => {
            let config = load_config(required_config(config_path)?)?;
            filter::run(&config, seed, required_out(out_path)?)
        }
        Command::Surface => {
            let config = load_config(required_config(config_path)?)?;
            surface::run(&config, seed, required_out(out_path)?)
        }
        Command::Pmmh => {
            let config = load_config(required_config(config_path)?)?;
            mcmc::run_pmmh_cmd(&config, seed, required_out(out_path)?)
        }
        Command::Gibbs => {
            let config = load_config(required_config(config_path)?)?;
            mcmc::run_gibbs_cmd(&config, seed, required_out(out_path)?)
        }
        Command::Predict => {
            let config = load_config(required_config(config_path)?)?;
            predict::run(&config, seed, required_out(out_path)?)
        }
        Command::OracleCheck => {
            let config = match config_path {
                Some(path) => load_config(path)?,
                None => config::OracleCheckConfig::default(),
            };
            if !oracle_check::run(&config, seed, out_path)? {
                std::process::exit(1);
            }
            Ok(())
        }
    }
}
