//! Parameter and state inference: static-model estimators, pseudo-marginal
//! Metropolis–Hastings driven by any likelihood estimator, Gibbs samplers
//! over agent trajectories, and posterior prediction.

pub mod gibbs;
pub mod static_model;

pub use gibbs::{
    gibbs_block, gibbs_single_site, gibbs_swap, run_gibbs, GibbsConfig, GibbsOutput, GibbsSample,
};
pub use static_model::{
    static_alive_estimator, static_marginal_likelihood, static_naive_mc, static_posterior_sample,
    StaticMethod,
};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::model::{agent_rates, Covariates, ModelParams, Network};
use crate::numeric::{logaddexp, logistic, logit, logsumexp};
use crate::sis::{infection_probs, sample_bernoulli_state};
use crate::smc::{run_apf_sis, sample_log_categorical, PmfMode};
use crate::streams::{derive_seed, stream_rng};

/// Flattens parameters onto the unconstrained proposal space:
/// `[β₀ | β_λ | β_γ | logit ρ]`.
pub fn theta_to_vec(theta: &ModelParams) -> Vec<f64> {
    let mut v = Vec::with_capacity(3 * theta.beta0.len() + 1);
    v.extend_from_slice(&theta.beta0);
    v.extend_from_slice(&theta.beta_lambda);
    v.extend_from_slice(&theta.beta_gamma);
    v.push(logit(theta.rho));
    v
}

/// Inverse of [`theta_to_vec`] for coefficient dimension `d`.
pub fn vec_to_theta(v: &[f64], d: usize) -> ModelParams {
    debug_assert_eq!(v.len(), 3 * d + 1);
    ModelParams {
        beta0: v[..d].to_vec(),
        beta_lambda: v[d..2 * d].to_vec(),
        beta_gamma: v[2 * d..3 * d].to_vec(),
        rho: logistic(v[3 * d]),
    }
}

/// Independent prior: Normal(mean, sd) on each regression coordinate and
/// Uniform(0, 1) on the reporting probability. Because chains move on the
/// logit scale, the uniform prior contributes the logistic density as a
/// Jacobian term.
#[derive(Clone, Debug)]
pub struct Prior {
    beta_mean: Vec<f64>,
    beta_sd: Vec<f64>,
}

impl Prior {
    pub fn new(beta_mean: Vec<f64>, beta_sd: Vec<f64>) -> Result<Self> {
        if beta_mean.len() != beta_sd.len() {
            return Err(Error::DimensionMismatch(
                "prior: mean and sd vectors must have equal length".into(),
            ));
        }
        if beta_sd.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::InvalidArgument(
                "prior: standard deviations must be positive".into(),
            ));
        }
        Ok(Self { beta_mean, beta_sd })
    }

    /// Same Normal(mean, sd) prior on every regression coordinate.
    pub fn isotropic(coords: usize, mean: f64, sd: f64) -> Result<Self> {
        Self::new(vec![mean; coords], vec![sd; coords])
    }

    /// Number of regression coordinates the prior covers.
    pub fn beta_len(&self) -> usize {
        self.beta_mean.len()
    }

    /// Log prior density evaluated on the unconstrained vector
    /// `[β | logit ρ]`, including the logistic Jacobian of the uniform
    /// prior on ρ.
    pub fn log_density(&self, v: &[f64]) -> f64 {
        debug_assert_eq!(v.len(), self.beta_mean.len() + 1);
        const HALF_LN_TWO_PI: f64 = 0.918_938_533_204_672_7;
        let mut total = 0.0;
        for ((&x, &m), &s) in v.iter().zip(&self.beta_mean).zip(&self.beta_sd) {
            let z = (x - m) / s;
            total += -HALF_LN_TWO_PI - s.ln() - 0.5 * z * z;
        }
        let z = v[self.beta_mean.len()];
        // ln ρ(1-ρ) = -softplus(-z) - softplus(z).
        total - logaddexp(0.0, -z) - logaddexp(0.0, z)
    }
}

/// Adds independent Normal(0, step_sd²) noise to every coordinate of the
/// unconstrained parameter vector. A zero step returns the input unchanged.
pub fn rw_propose<R: Rng + ?Sized>(rng: &mut R, v: &[f64], step_sd: f64) -> Vec<f64> {
    if step_sd == 0.0 {
        return v.to_vec();
    }
    v.iter()
        .map(|&x| {
            let z: f64 = StandardNormal.sample(rng);
            x + step_sd * z
        })
        .collect()
}

/// One retained state of a pseudo-marginal chain.
#[derive(Clone, Debug)]
pub struct PmmhSample {
    pub theta: ModelParams,
    pub log_likelihood: f64,
    pub accepted: bool,
}

/// Pseudo-marginal Metropolis–Hastings over the unconstrained parameter
/// vector. The likelihood estimator is any closure mapping a parameter value
/// and a derived seed to a log-likelihood estimate; plugging in a filter
/// gives particle MCMC while plugging in the exact forward algorithm gives a
/// standard MH chain. Estimates of `-inf` are always rejected, and the
/// stored estimate is only replaced on acceptance.
///
/// `update_mask`, when given, freezes the coordinates marked `false` at
/// their initial values. The returned chain has `iters + 1` entries; entry 0
/// is the initial state.
pub fn run_pmmh<F>(
    seed: u64,
    init: &ModelParams,
    prior: &Prior,
    mut estimator: F,
    iters: usize,
    step_sd: f64,
    update_mask: Option<&[bool]>,
) -> Result<Vec<PmmhSample>>
where
    F: FnMut(&ModelParams, u64) -> f64,
{
    let d = init.beta0.len();
    init.validate(d)?;
    if !(init.rho > 0.0 && init.rho < 1.0) {
        return Err(Error::InvalidProbability(init.rho));
    }
    if prior.beta_len() != 3 * d {
        return Err(Error::DimensionMismatch(format!(
            "prior covers {} regression coordinates, model has {}",
            prior.beta_len(),
            3 * d
        )));
    }
    if iters == 0 {
        return Err(Error::InvalidArgument("PMMH needs at least one iteration".into()));
    }
    if let Some(mask) = update_mask {
        if mask.len() != 3 * d + 1 {
            return Err(Error::DimensionMismatch(format!(
                "update mask has {} entries, parameter vector has {}",
                mask.len(),
                3 * d + 1
            )));
        }
    }
    if !(step_sd >= 0.0) {
        return Err(Error::InvalidArgument("step size must be non-negative".into()));
    }

    let mut rng = stream_rng(seed, "pmmh", &[]);
    let mut current = theta_to_vec(init);
    let mut current_ll = estimator(init, derive_seed(seed, "pmmh/estimate", &[0]));
    let mut current_lp = prior.log_density(&current);

    let mut chain = Vec::with_capacity(iters + 1);
    chain.push(PmmhSample {
        theta: init.clone(),
        log_likelihood: current_ll,
        accepted: false,
    });

    for iter in 1..=iters {
        let mut proposal = rw_propose(&mut rng, &current, step_sd);
        if let Some(mask) = update_mask {
            for (coord, (p, &keep)) in proposal.iter_mut().zip(mask).enumerate() {
                if !keep {
                    *p = current[coord];
                }
            }
        }
        let theta = vec_to_theta(&proposal, d);
        let proposal_ll = estimator(&theta, derive_seed(seed, "pmmh/estimate", &[iter as u64]));
        let proposal_lp = prior.log_density(&proposal);

        let accept = proposal_ll > f64::NEG_INFINITY && {
            let log_ratio = proposal_lp + proposal_ll - current_lp - current_ll;
            log_ratio >= 0.0 || rng.gen::<f64>().ln() < log_ratio
        };
        if accept {
            current = proposal;
            current_ll = proposal_ll;
            current_lp = proposal_lp;
        }
        chain.push(PmmhSample {
            theta: vec_to_theta(&current, d),
            log_likelihood: current_ll,
            accepted: accept,
        });
    }
    Ok(chain)
}

/// Per-time posterior predictive quantiles of future observed counts.
#[derive(Clone, Debug, Default)]
pub struct PredictiveSummary {
    /// Predicted time indices, contiguous after the last observed time.
    pub times: Vec<usize>,
    /// 2.5% quantile per predicted time.
    pub lower: Vec<f64>,
    /// Median per predicted time.
    pub median: Vec<f64>,
    /// 97.5% quantile per predicted time.
    pub upper: Vec<f64>,
}

fn quantile(sorted: &[u64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let idx = ((sorted.len() - 1) as f64 * p).round() as usize;
    sorted[idx] as f64
}

/// Forward-simulates observations beyond the assimilated series. Each draw
/// picks a parameter value from the chain output, runs a fully adapted
/// filter on the observed prefix, samples a filtering state at the last
/// observed time, and simulates latent dynamics and observations out to
/// `horizon` (the final time index). Returns 2.5/50/97.5% quantiles per
/// predicted time; an empty summary when nothing remains to predict.
pub fn posterior_predictive(
    seed: u64,
    thetas: &[ModelParams],
    covariates: &Covariates,
    network: &Network,
    y_obs: &[u64],
    horizon: usize,
    particles: usize,
    draws: usize,
) -> Result<PredictiveSummary> {
    if thetas.is_empty() {
        return Err(Error::InvalidArgument("no parameter draws supplied".into()));
    }
    if y_obs.is_empty() {
        return Err(Error::InvalidArgument("no observations supplied".into()));
    }
    if draws == 0 {
        return Err(Error::InvalidArgument("prediction needs at least one draw".into()));
    }
    let t_obs = y_obs.len() - 1;
    if horizon < t_obs {
        return Err(Error::InvalidArgument(format!(
            "horizon {horizon} precedes the last observed time {t_obs}"
        )));
    }
    if horizon == t_obs {
        return Ok(PredictiveSummary::default());
    }

    let steps = horizon - t_obs;
    let mut simulated: Vec<Vec<u64>> = vec![Vec::with_capacity(draws); steps];
    for draw in 0..draws {
        let mut rng = stream_rng(seed, "predict", &[draw as u64]);
        let theta = &thetas[rng.gen_range(0..thetas.len())];
        let rates = agent_rates(theta, covariates)?;
        let filter_seed = derive_seed(seed, "predict/filter", &[draw as u64]);
        let out = run_apf_sis(
            &rates,
            network,
            theta.rho,
            y_obs,
            particles,
            filter_seed,
            PmfMode::Exact,
        )?;
        if out.system.collapsed {
            continue;
        }
        let weights = &out.system.final_log_weights;
        let log_total = logsumexp(weights);
        let pick = sample_log_categorical(&mut rng, weights, log_total);
        let mut x = out.system.states.last().expect("filter ran")[pick].clone();
        for column in simulated.iter_mut() {
            let probs = infection_probs(&x, &rates, network);
            x = sample_bernoulli_state(&mut rng, &probs);
            let y = rand_distr::Binomial::new(x.count_ones() as u64, theta.rho)
                .map_err(|_| Error::InvalidProbability(theta.rho))?
                .sample(&mut rng);
            column.push(y);
        }
    }
    if simulated[0].is_empty() {
        return Err(Error::Infeasible(
            "every predictive draw collapsed while filtering the observed prefix".into(),
        ));
    }

    let mut summary = PredictiveSummary::default();
    for (step, column) in simulated.iter_mut().enumerate() {
        column.sort_unstable();
        summary.times.push(t_obs + 1 + step);
        summary.lower.push(quantile(column, 0.025));
        summary.median.push(quantile(column, 0.5));
        summary.upper.push(quantile(column, 0.975));
    }
    Ok(summary)
}
