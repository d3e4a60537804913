//! Likelihood estimators and posterior sampling for the static model: a
//! single latent configuration `X ~ ∏ Ber(αⁿ)` observed once through a
//! binomial count `y ~ Bin(I(X), ρ)`.

use rand::Rng;

use crate::distributions::{poibin_table, transpoi_pmf, ProbVector};
use crate::error::{Error, Result};
use crate::numeric::{logsumexp, LogFactorial};
use crate::sis::{obs_log_row, obs_logpmf, sample_bernoulli_state};
use crate::smc::log_mass_row;
use crate::state::PopulationState;

/// How marginal count probabilities are evaluated in the static model.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StaticMethod {
    /// Exact Poisson-Binomial recursion, O(N²).
    Exact,
    /// Translated-Poisson surrogate for the count distribution, O(N).
    TransPoi,
    /// Thinning identity: the observed count is marginally PoiBin(ρα).
    Thinning,
}

fn validate_rho(rho: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::InvalidProbability(rho));
    }
    Ok(())
}

/// Log marginal likelihood `ln p(y)` of a single binomial observation of a
/// Bernoulli population. Returns `-inf` for `y` beyond the population size.
pub fn static_marginal_likelihood(
    y: u64,
    alpha: &ProbVector,
    rho: f64,
    method: StaticMethod,
) -> Result<f64> {
    validate_rho(rho)?;
    let n = alpha.len();
    if y as usize > n {
        return Ok(f64::NEG_INFINITY);
    }
    match method {
        StaticMethod::Exact => {
            let counts = poibin_table(alpha).log_pmf();
            let lf = LogFactorial::new(n);
            let row = obs_log_row(y, n, rho, &lf);
            let terms: Vec<f64> = counts.iter().zip(&row).map(|(a, b)| a + b).collect();
            Ok(logsumexp(&terms))
        }
        StaticMethod::Thinning => {
            let thinned = alpha.scaled(rho)?;
            Ok(poibin_table(&thinned).log_pmf()[y as usize])
        }
        StaticMethod::TransPoi => {
            let thinned = alpha.scaled(rho)?;
            let row = log_mass_row(&transpoi_pmf(&thinned), n + 1);
            Ok(row[y as usize])
        }
    }
}

/// Plain Monte Carlo likelihood estimate: the average observation density
/// over `particles` prior draws. Unbiased on the linear scale and may be
/// exactly zero when no draw reaches the observed count.
pub fn static_naive_mc<R: Rng + ?Sized>(
    rng: &mut R,
    y: u64,
    alpha: &ProbVector,
    rho: f64,
    particles: usize,
) -> Result<f64> {
    validate_rho(rho)?;
    if particles == 0 {
        return Err(Error::InvalidArgument("naive MC needs at least one draw".into()));
    }
    let mut total = 0.0;
    for _ in 0..particles {
        let x = sample_bernoulli_state(rng, alpha);
        total += obs_logpmf(y, x.count_ones(), rho).exp();
    }
    Ok(total / particles as f64)
}

/// Alive estimator: draws prior configurations until `particles` of them
/// satisfy `I(X) >= y`, then returns the unbiased negative-binomial-corrected
/// average over the first `R - 1` draws together with the total draw count
/// `R`. Infeasible targets (more infections requested than agents that can
/// ever be infected) are rejected up front so the sampler cannot loop
/// forever.
pub fn static_alive_estimator<R: Rng + ?Sized>(
    rng: &mut R,
    y: u64,
    alpha: &ProbVector,
    rho: f64,
    particles: usize,
) -> Result<(f64, u64)> {
    validate_rho(rho)?;
    if particles < 2 {
        return Err(Error::InvalidArgument(
            "alive estimator needs at least two target configurations".into(),
        ));
    }
    let attainable = alpha.iter().filter(|&&a| a > 0.0).count();
    if y as usize > attainable {
        return Err(Error::Infeasible(format!(
            "count {y} cannot be reached: only {attainable} agents have positive rates"
        )));
    }
    let mut successes = 0usize;
    let mut draws = 0u64;
    let mut total = 0.0;
    loop {
        draws += 1;
        let x = sample_bernoulli_state(rng, alpha);
        let weight = obs_logpmf(y, x.count_ones(), rho).exp();
        if x.count_ones() >= y as usize {
            successes += 1;
            if successes == particles {
                return Ok((total / (draws - 1) as f64, draws));
            }
        }
        total += weight;
    }
}

/// Draws a latent configuration from the static posterior `p(x | y)` by
/// first sampling the infected count from its posterior and then the
/// configuration from the conditional-Bernoulli law given that count.
pub fn static_posterior_sample<R: Rng + ?Sized>(
    rng: &mut R,
    y: u64,
    alpha: &ProbVector,
    rho: f64,
    method: StaticMethod,
) -> Result<PopulationState> {
    validate_rho(rho)?;
    let n = alpha.len();
    if y as usize > n {
        return Err(Error::Infeasible(format!(
            "observed count {y} exceeds population size {n}"
        )));
    }
    let table = poibin_table(alpha);
    let exact = table.log_pmf();
    let counts = match method {
        // The thinning identity changes nothing about the count posterior,
        // so it shares the exact evaluation.
        StaticMethod::Exact | StaticMethod::Thinning => exact.clone(),
        StaticMethod::TransPoi => {
            // Surrogate masses, restricted to the exact support so the
            // conditional-Bernoulli draw below can never be handed an
            // unattainable count.
            let surrogate = log_mass_row(&transpoi_pmf(alpha), n + 1);
            surrogate
                .iter()
                .zip(&exact)
                .map(|(&s, &e)| if e.is_finite() { s } else { f64::NEG_INFINITY })
                .collect()
        }
    };
    let lf = LogFactorial::new(n);
    let row = obs_log_row(y, n, rho, &lf);
    let posterior: Vec<f64> = counts.iter().zip(&row).map(|(a, b)| a + b).collect();
    let log_total = logsumexp(&posterior);
    if log_total == f64::NEG_INFINITY {
        return Err(Error::Infeasible(format!(
            "observed count {y} has zero marginal probability"
        )));
    }
    let i = crate::smc::sample_log_categorical(rng, &posterior, log_total);
    crate::distributions::condber_sample(rng, alpha, i, &table)
}
