//! `pmmh` and `gibbs`: parameter-inference chains written as CSV, with
//! burn-in and thinning applied at output time. Replicate chains run in
//! parallel from independently derived seeds.

use std::path::Path;
use std::time::Instant;

use anyhow::bail;
use rayon::prelude::*;

use epismc::inference::{run_gibbs, run_pmmh, GibbsConfig, GibbsOutput, PmmhSample};
use epismc::model::{ModelKind, ModelParams, ModelSpec};
use epismc::streams::derive_seed;

use crate::config::{DataDocument, GibbsCliConfig, PmmhConfig};
use crate::csvout::{num, theta_fields, theta_headers, Table};
use crate::estimator::Estimator;

pub fn validate_chain_options(
    iters: usize,
    burn_in: usize,
    thin: usize,
    reps: usize,
) -> anyhow::Result<()> {
    if iters == 0 {
        bail!("chains need at least one iteration");
    }
    if thin == 0 {
        bail!("thin must be positive");
    }
    if burn_in > iters {
        bail!("burn-in {burn_in} discards the whole chain of {iters} iterations");
    }
    if reps == 0 {
        bail!("reps must be positive");
    }
    Ok(())
}

fn require_interior_rho(theta: &ModelParams) -> anyhow::Result<()> {
    if !(theta.rho > 0.0 && theta.rho < 1.0) {
        bail!("chain initialization needs rho strictly inside (0, 1): chains carry logit(rho)");
    }
    Ok(())
}

/// Writes `rep, iteration, θ…, <value>, accepted` rows for the retained
/// iterations of every chain.
fn write_chains<F>(
    out: &Path,
    d: usize,
    value_column: &str,
    reps: usize,
    iters: usize,
    burn_in: usize,
    thin: usize,
    row: F,
) -> anyhow::Result<()>
where
    F: Fn(usize, usize) -> (Vec<String>, f64, bool),
{
    let mut header: Vec<String> = vec!["rep".into(), "iteration".into()];
    header.extend(theta_headers(d));
    header.push(value_column.into());
    header.push("accepted".into());
    let mut table = Table::create(out, &header)?;
    for rep in 0..reps {
        let mut iteration = burn_in;
        while iteration <= iters {
            let (theta, value, accepted) = row(rep, iteration);
            let mut fields = vec![rep.to_string(), iteration.to_string()];
            fields.extend(theta);
            fields.push(num(value));
            fields.push(u8::from(accepted).to_string());
            table.row(fields)?;
            iteration += thin;
        }
    }
    table.finish()
}

fn print_acceptance(label: &str, rates: &[f64], wall_seconds: f64) {
    let mean = rates.iter().sum::<f64>() / rates.len() as f64;
    if rates.len() > 1 {
        println!("{label} acceptance rate: {:.4} (mean over {} chains)", mean, rates.len());
        let formatted: Vec<String> = rates.iter().map(|r| format!("{r:.4}")).collect();
        println!("per-chain acceptance: {}", formatted.join(", "));
    } else {
        println!("{label} acceptance rate: {mean:.4}");
    }
    println!("wall time: {:.3} s", wall_seconds);
}

pub fn run_pmmh_cmd(config: &PmmhConfig, seed: u64, out: &Path) -> anyhow::Result<()> {
    let spec = ModelSpec::load(&config.model)?;
    let data = DataDocument::load(&config.data)?;
    let y = data.y;
    validate_chain_options(config.iters, config.burn_in, config.thin, config.reps)?;
    require_interior_rho(&spec.theta)?;
    let estimator = Estimator {
        kind: spec.kind,
        covariates: &spec.covariates,
        network: &spec.network,
        y: &y,
        method: config.estimator,
        particles: config.particles,
        mode: config.mode,
        twist: config.twist,
        clusters: config.clusters.as_deref(),
    };
    estimator.validate()?;
    let prior = config.prior.build(spec.d())?;

    let start = Instant::now();
    let chains: Vec<Vec<PmmhSample>> = (0..config.reps)
        .into_par_iter()
        .map(|rep| {
            let chain_seed = derive_seed(seed, "pmmh/rep", &[rep as u64]);
            run_pmmh(
                chain_seed,
                &spec.theta,
                &prior,
                |theta, estimate_seed| estimator.estimate(theta, estimate_seed),
                config.iters,
                config.step_sd,
                config.update_mask.as_deref(),
            )
        })
        .collect::<epismc::Result<_>>()?;
    let wall = start.elapsed().as_secs_f64();

    write_chains(
        out,
        spec.d(),
        "log_likelihood",
        config.reps,
        config.iters,
        config.burn_in,
        config.thin,
        |rep, iteration| {
            let sample = &chains[rep][iteration];
            (theta_fields(&sample.theta), sample.log_likelihood, sample.accepted)
        },
    )?;

    let rates: Vec<f64> = chains
        .iter()
        .map(|chain| {
            chain[1..].iter().filter(|s| s.accepted).count() as f64 / config.iters as f64
        })
        .collect();
    print_acceptance("pmmh", &rates, wall);
    Ok(())
}

pub fn run_gibbs_cmd(config: &GibbsCliConfig, seed: u64, out: &Path) -> anyhow::Result<()> {
    let spec = ModelSpec::load(&config.model)?;
    if spec.kind == ModelKind::Sir {
        bail!("the gibbs sampler supports SIS models only");
    }
    let data = DataDocument::load(&config.data)?;
    let y = data.y;
    validate_chain_options(config.iters, config.burn_in, config.thin, config.reps)?;
    require_interior_rho(&spec.theta)?;
    let prior = config.prior.build(spec.d())?;
    let kernel_config = GibbsConfig {
        single_site_weight: config.single_site_weight,
        swap_weight: config.swap_weight,
        block_weight: config.block_weight,
        block_size: config.block_size,
        update_theta: config.update_theta,
        theta_step_sd: config.theta_step_sd,
        update_mask: config.update_mask.clone(),
    };

    let start = Instant::now();
    let chains: Vec<GibbsOutput> = (0..config.reps)
        .into_par_iter()
        .map(|rep| {
            let chain_seed = derive_seed(seed, "gibbs/rep", &[rep as u64]);
            run_gibbs(
                chain_seed,
                &spec.covariates,
                &spec.network,
                &y,
                &spec.theta,
                &prior,
                &kernel_config,
                config.iters,
            )
        })
        .collect::<epismc::Result<_>>()?;
    let wall = start.elapsed().as_secs_f64();

    write_chains(
        out,
        spec.d(),
        "log_complete",
        config.reps,
        config.iters,
        config.burn_in,
        config.thin,
        |rep, iteration| {
            let sample = &chains[rep].samples[iteration];
            (theta_fields(&sample.theta), sample.log_complete, sample.accepted)
        },
    )?;

    if config.update_theta {
        let rates: Vec<f64> = chains
            .iter()
            .map(|chain| {
                chain.samples[1..].iter().filter(|s| s.accepted).count() as f64
                    / config.iters as f64
            })
            .collect();
        print_acceptance("gibbs parameter-move", &rates, wall);
    } else {
        println!("parameter updates disabled; trajectory kernels only");
        println!("wall time: {:.3} s", wall);
    }
    Ok(())
}
