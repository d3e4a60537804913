//! `predict`: posterior-predictive quantiles of the future observed
//! counts, from a PMMH chain fitted to the observations up to `t_obs`.

use std::path::Path;
use std::time::Instant;

use anyhow::bail;

use epismc::inference::{posterior_predictive, run_pmmh};
use epismc::model::{ModelKind, ModelParams, ModelSpec};
use epismc::streams::derive_seed;

use crate::config::{DataDocument, PredictConfig};
use crate::csvout::{num, Table};
use crate::estimator::Estimator;
use crate::mcmc::validate_chain_options;

pub fn run(config: &PredictConfig, seed: u64, out: &Path) -> anyhow::Result<()> {
    let spec = ModelSpec::load(&config.model)?;
    if spec.kind == ModelKind::Sir {
        bail!("prediction supports SIS models only");
    }
    let data = DataDocument::load(&config.data)?;
    let y = data.y;
    let horizon = y.len() - 1;
    if config.t_obs >= horizon {
        bail!(
            "t_obs = {} must lie strictly before the final time {horizon}",
            config.t_obs
        );
    }
    if config.draws == 0 {
        bail!("draws must be positive");
    }
    let prefix = &y[..=config.t_obs];

    let inference = &config.inference;
    validate_chain_options(inference.iters, inference.burn_in, inference.thin, 1)?;
    if !(spec.theta.rho > 0.0 && spec.theta.rho < 1.0) {
        bail!("chain initialization needs rho strictly inside (0, 1)");
    }
    let estimator = Estimator {
        kind: spec.kind,
        covariates: &spec.covariates,
        network: &spec.network,
        y: prefix,
        method: inference.estimator,
        particles: inference.particles,
        mode: inference.mode,
        twist: inference.twist,
        clusters: inference.clusters.as_deref(),
    };
    estimator.validate()?;
    let prior = inference.prior.build(spec.d())?;

    let start = Instant::now();
    let chain = run_pmmh(
        derive_seed(seed, "predict/chain", &[]),
        &spec.theta,
        &prior,
        |theta, estimate_seed| estimator.estimate(theta, estimate_seed),
        inference.iters,
        inference.step_sd,
        None,
    )?;
    let thetas: Vec<ModelParams> = chain[inference.burn_in..]
        .iter()
        .step_by(inference.thin)
        .map(|sample| sample.theta.clone())
        .collect();

    let summary = posterior_predictive(
        derive_seed(seed, "predict/draws", &[]),
        &thetas,
        &spec.covariates,
        &spec.network,
        prefix,
        horizon,
        config.particles,
        config.draws,
    )?;

    let mut table = Table::create(out, &["t", "lower", "median", "upper"])?;
    for (((&t, &lower), &median), &upper) in summary
        .times
        .iter()
        .zip(&summary.lower)
        .zip(&summary.median)
        .zip(&summary.upper)
    {
        table.row([t.to_string(), num(lower), num(median), num(upper)])?;
    }
    table.finish()?;

    let accept_rate =
        chain[1..].iter().filter(|s| s.accepted).count() as f64 / inference.iters as f64;
    println!("inference acceptance rate: {accept_rate:.4}");
    println!(
        "predicted times {} through {} from {} retained parameter draws",
        config.t_obs + 1,
        horizon,
        thetas.len()
    );
    println!("wall time: {:.3} s", start.elapsed().as_secs_f64());
    Ok(())
}
