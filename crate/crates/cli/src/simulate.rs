//! `simulate`: draw one latent trajectory with its observed counts and
//! write the data file, generating the model document first if asked.

use std::path::Path;

use anyhow::{bail, Context};
use rand::prelude::Distribution;
use rand_distr::Normal;

use epismc::model::{Covariates, ModelKind, ModelSpec, Network};
use epismc::sir::sir_simulate;
use epismc::sis::simulate_sis;
use epismc::streams::stream_rng;

use crate::config::{DataDocument, GenerateConfig, SimulateConfig};

pub fn run(config: &SimulateConfig, seed: u64, out: &Path) -> anyhow::Result<()> {
    let spec = match (&config.model, &config.generate) {
        (Some(path), None) => ModelSpec::load(path)
            .with_context(|| format!("loading model {}", path.display()))?,
        (None, Some(generate)) => {
            if config.model_out.is_none() {
                bail!("`generate` needs `model_out`: later commands require the generated model");
            }
            generate_model(generate, seed)?
        }
        _ => bail!("exactly one of `model` / `generate` must be set"),
    };
    if let Some(path) = &config.model_out {
        std::fs::write(path, spec.to_json() + "\n")
            .with_context(|| format!("writing model {}", path.display()))?;
    }

    let rates = spec.rates()?;
    let mut rng = stream_rng(seed, "simulate", &[]);
    let (y, x_true): (Vec<u64>, Vec<Vec<u8>>) = match spec.kind {
        ModelKind::Sis => {
            let traj = simulate_sis(&mut rng, &rates, &spec.network, spec.theta.rho, config.horizon);
            let truth = traj
                .states
                .iter()
                .map(|x| (0..x.len()).map(|agent| u8::from(x.get(agent))).collect())
                .collect();
            (traj.y, truth)
        }
        ModelKind::Sir => {
            let traj = sir_simulate(&mut rng, &rates, &spec.network, spec.theta.rho, config.horizon);
            (traj.y, traj.states.iter().map(|x| x.to_digits()).collect())
        }
    };

    let doc = DataDocument { y, x_true: config.include_truth.then_some(x_true) };
    let json = serde_json::to_string_pretty(&doc).expect("data serialization cannot fail");
    std::fs::write(out, json + "\n")
        .with_context(|| format!("writing data {}", out.display()))?;
    println!(
        "wrote {}: {} observations from an N = {} {} model",
        out.display(),
        doc.y.len(),
        spec.n(),
        match spec.kind {
            ModelKind::Sis => "SIS",
            ModelKind::Sir => "SIR",
        }
    );
    Ok(())
}

/// Complete-graph model with generated covariates: an optional intercept
/// column plus independent Normal draws from the `simulate/covariates`
/// stream of the master seed.
fn generate_model(generate: &GenerateConfig, seed: u64) -> anyhow::Result<ModelSpec> {
    if generate.n < 2 {
        bail!("generated models need at least two agents");
    }
    let d = generate.covariates.dims();
    if d == 0 {
        bail!("the covariate generator produces zero columns");
    }
    if !(generate.covariates.normal_sd > 0.0) {
        bail!("covariate spread must be positive");
    }
    let normal = Normal::new(generate.covariates.normal_mean, generate.covariates.normal_sd)
        .expect("validated above");
    let mut rng = stream_rng(seed, "simulate/covariates", &[]);
    let mut values = Vec::with_capacity(generate.n * d);
    for _ in 0..generate.n {
        if generate.covariates.intercept {
            values.push(1.0);
        }
        for _ in 0..generate.covariates.normal_dims {
            values.push(normal.sample(&mut rng));
        }
    }
    let covariates = Covariates::new(generate.n, d, values)?;
    generate.theta.validate(d)?;
    Ok(ModelSpec {
        kind: generate.kind,
        covariates,
        network: Network::complete(generate.n)?,
        theta: generate.theta.clone(),
    })
}
