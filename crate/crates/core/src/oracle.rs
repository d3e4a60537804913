//! Exact small-population references: forward filtering over the full
//! agent state space, exact backward information filters, smoothing
//! marginals, and trajectory-posterior enumeration.
//!
//! Everything here is exponential in the population size and guarded
//! accordingly; these routines exist to validate the particle methods and
//! to drive exact-likelihood parameter inference on tiny instances.

use std::collections::HashMap;

use crate::distributions::{poibin_table, ProbVector};
use crate::error::{Error, Result};
use crate::model::{AgentRates, Network};
use crate::numeric::{logsumexp, LogFactorial};
use crate::sir::{sir_probs, SirState};
use crate::sis::infection_probs;
use crate::state::PopulationState;

/// Largest population for the 2^N SIS forward pass.
pub const MAX_EXACT_SIS: usize = 14;
/// Largest population for the 3^N SIR forward pass.
pub const MAX_EXACT_SIR: usize = 9;
/// Largest population for the 2^N SIS backward pass.
pub const MAX_BIF_SIS: usize = 10;
/// Largest population for the 3^N SIR backward pass.
pub const MAX_BIF_SIR: usize = 6;
/// Largest path-space size (state count to the power T+1) enumerated.
pub const MAX_TRAJECTORY_SPACE: f64 = 4.2e6;

/// Product measure over binary masks: entry `mask` is
/// `∏_n probs[n]^{bit_n} (1-probs[n])^{1-bit_n}`, agent `n` at bit `n`.
fn bernoulli_product_row(probs: &[f64], out: &mut Vec<f64>) {
    out.clear();
    out.push(1.0);
    for &a in probs {
        let half = out.len();
        for ix in 0..half {
            out.push(out[ix] * a);
        }
        for v in &mut out[..half] {
            *v *= 1.0 - a;
        }
    }
}

/// Product measure over trit indices (agent `n` at significance `3^n`).
fn categorical_product_row(triples: &[[f64; 3]], out: &mut Vec<f64>) {
    out.clear();
    out.push(1.0);
    for triple in triples {
        let third = out.len();
        for phase in [1usize, 2] {
            for ix in 0..third {
                let v = out[ix] * triple[phase];
                out.push(v);
            }
        }
        for v in &mut out[..third] {
            *v *= triple[0];
        }
    }
}

/// Exact filtering output: the log marginal likelihood and the filter
/// distribution over the enumerated state space at every time.
#[derive(Clone, Debug)]
pub struct ExactForward {
    pub log_likelihood: f64,
    /// `filter[t][state_index]` = `p(x_t = state | y_{0:t})`.
    pub filter: Vec<Vec<f64>>,
}

fn check_observations(y: &[u64], n: usize) -> Result<()> {
    if y.is_empty() {
        return Err(Error::InvalidArgument("empty observation sequence".into()));
    }
    for (t, &obs) in y.iter().enumerate() {
        if obs as usize > n {
            return Err(Error::InvalidArgument(format!(
                "observation y_{t} = {obs} exceeds population {n}"
            )));
        }
    }
    Ok(())
}

struct SisSpace {
    n: usize,
    states: Vec<PopulationState>,
}

impl SisSpace {
    fn new(n: usize) -> Self {
        let states = (0..1usize << n)
            .map(|mask| PopulationState::from_mask(n, mask as u64))
            .collect();
        Self { n, states }
    }

    fn obs_factors(&self, y: u64, rho: f64, lf: &LogFactorial) -> Vec<f64> {
        let row = crate::sis::obs_log_row(y, self.n, rho, lf);
        self.states.iter().map(|x| row[x.count_ones()].exp()).collect()
    }
}

/// Exact log marginal likelihood and filter for the SIS model by scaled
/// linear forward recursion over all 2^N states.
pub fn forward_filter_sis(
    rates: &AgentRates,
    network: &Network,
    rho: f64,
    y: &[u64],
) -> Result<ExactForward> {
    let (forward, _) = forward_filter_sis_with_predictive(rates, network, rho, y)?;
    Ok(forward)
}

fn forward_filter_sis_with_predictive(
    rates: &AgentRates,
    network: &Network,
    rho: f64,
    y: &[u64],
) -> Result<(ExactForward, Vec<Vec<f64>>)> {
    let n = rates.n();
    if n > MAX_EXACT_SIS {
        return Err(Error::TooLarge(format!(
            "exact SIS forward pass supports N <= {MAX_EXACT_SIS}, got {n}"
        )));
    }
    check_observations(y, n)?;
    let space = SisSpace::new(n);
    let size = space.states.len();
    let lf = LogFactorial::new(n);
    let mut mu = Vec::new();
    bernoulli_product_row(&rates.alpha0, &mut mu);

    let mut log_likelihood = 0.0;
    let mut filter: Vec<Vec<f64>> = Vec::with_capacity(y.len());
    let mut predictive: Vec<Vec<f64>> = Vec::with_capacity(y.len());
    let mut row = Vec::new();
    for (t, &obs) in y.iter().enumerate() {
        let pred = if t == 0 {
            mu.clone()
        } else {
            let prev = &filter[t - 1];
            let mut next = vec![0.0; size];
            for (ix, &mass) in prev.iter().enumerate() {
                if mass == 0.0 {
                    continue;
                }
                let probs = infection_probs(&space.states[ix], rates, network);
                bernoulli_product_row(&probs, &mut row);
                for (jx, &p) in row.iter().enumerate() {
                    next[jx] += mass * p;
                }
            }
            next
        };
        let g = space.obs_factors(obs, rho, &lf);
        let mut current: Vec<f64> = pred.iter().zip(&g).map(|(&p, &gf)| p * gf).collect();
        let scale: f64 = current.iter().sum();
        if scale <= 0.0 {
            return Err(Error::Infeasible(format!(
                "zero forward mass at time {t}; observations infeasible under the model"
            )));
        }
        for v in &mut current {
            *v /= scale;
        }
        log_likelihood += scale.ln();
        filter.push(current);
        predictive.push(pred);
    }
    Ok((ExactForward { log_likelihood, filter }, predictive))
}

/// Exact log marginal likelihood and filter for the SIR model over all
/// 3^N states (trit encoding of `SirState`).
pub fn forward_filter_sir(
    rates: &AgentRates,
    network: &Network,
    rho: f64,
    y: &[u64],
) -> Result<ExactForward> {
    let n = rates.n();
    if n > MAX_EXACT_SIR {
        return Err(Error::TooLarge(format!(
            "exact SIR forward pass supports N <= {MAX_EXACT_SIR}, got {n}"
        )));
    }
    check_observations(y, n)?;
    let size = 3usize.pow(n as u32);
    let states: Vec<SirState> = (0..size).map(|ix| SirState::from_trit_index(n, ix)).collect();
    let lf = LogFactorial::new(n);

    let init_triples: Vec<[f64; 3]> =
        rates.alpha0.iter().map(|&a| [1.0 - a, a, 0.0]).collect();
    let mut mu = Vec::new();
    categorical_product_row(&init_triples, &mut mu);

    let mut log_likelihood = 0.0;
    let mut filter: Vec<Vec<f64>> = Vec::with_capacity(y.len());
    let mut row = Vec::new();
    for (t, &obs) in y.iter().enumerate() {
        let pred = if t == 0 {
            mu.clone()
        } else {
            let prev = &filter[t - 1];
            let mut next = vec![0.0; size];
            for (ix, &mass) in prev.iter().enumerate() {
                if mass == 0.0 {
                    continue;
                }
                let probs = sir_probs(&states[ix], rates, network);
                categorical_product_row(&probs.probs, &mut row);
                for (jx, &p) in row.iter().enumerate() {
                    if p > 0.0 {
                        next[jx] += mass * p;
                    }
                }
            }
            next
        };
        let obs_row = crate::sis::obs_log_row(obs, n, rho, &lf);
        let mut current: Vec<f64> = pred
            .iter()
            .zip(&states)
            .map(|(&p, x)| p * obs_row[x.infected_count()].exp())
            .collect();
        let scale: f64 = current.iter().sum();
        if scale <= 0.0 {
            return Err(Error::Infeasible(format!(
                "zero forward mass at time {t}; observations infeasible under the model"
            )));
        }
        for v in &mut current {
            *v /= scale;
        }
        log_likelihood += scale.ln();
        filter.push(current);
    }
    Ok(ExactForward { log_likelihood, filter })
}

/// Exact backward information filter for the SIS model:
/// `out[t][mask] = ln p(y_{t:T} | x_t = mask)` over all 2^N states.
pub fn exact_log_bif_sis(
    rates: &AgentRates,
    network: &Network,
    rho: f64,
    y: &[u64],
) -> Result<Vec<Vec<f64>>> {
    let n = rates.n();
    if n > MAX_BIF_SIS {
        return Err(Error::TooLarge(format!(
            "exact SIS backward pass supports N <= {MAX_BIF_SIS}, got {n}"
        )));
    }
    check_observations(y, n)?;
    let space = SisSpace::new(n);
    let size = space.states.len();
    let lf = LogFactorial::new(n);
    let horizon = y.len() - 1;
    let mut out = vec![vec![0.0; size]; y.len()];

    let obs_log = |obs: u64, ix: usize| -> f64 {
        let row = crate::sis::obs_log_row(obs, n, rho, &lf);
        row[space.states[ix].count_ones()]
    };
    for ix in 0..size {
        out[horizon][ix] = obs_log(y[horizon], ix);
    }
    let mut row = Vec::new();
    let mut terms = Vec::with_capacity(size);
    for t in (0..horizon).rev() {
        let (head, tail) = out.split_at_mut(t + 1);
        let next = &tail[0];
        let current = &mut head[t];
        for ix in 0..size {
            let probs = infection_probs(&space.states[ix], rates, network);
            bernoulli_product_row(&probs, &mut row);
            terms.clear();
            for (jx, &p) in row.iter().enumerate() {
                if p > 0.0 && next[jx] > f64::NEG_INFINITY {
                    terms.push(p.ln() + next[jx]);
                }
            }
            current[ix] = obs_log(y[t], ix) + logsumexp(&terms);
        }
    }
    Ok(out)
}

/// Exact backward information filter for the SIR model over all 3^N
/// states (trit encoding).
pub fn exact_log_bif_sir(
    rates: &AgentRates,
    network: &Network,
    rho: f64,
    y: &[u64],
) -> Result<Vec<Vec<f64>>> {
    let n = rates.n();
    if n > MAX_BIF_SIR {
        return Err(Error::TooLarge(format!(
            "exact SIR backward pass supports N <= {MAX_BIF_SIR}, got {n}"
        )));
    }
    check_observations(y, n)?;
    let size = 3usize.pow(n as u32);
    let states: Vec<SirState> = (0..size).map(|ix| SirState::from_trit_index(n, ix)).collect();
    let lf = LogFactorial::new(n);
    let horizon = y.len() - 1;
    let mut out = vec![vec![0.0; size]; y.len()];
    for (ix, x) in states.iter().enumerate() {
        let row = crate::sis::obs_log_row(y[horizon], n, rho, &lf);
        out[horizon][ix] = row[x.infected_count()];
    }
    let mut row = Vec::new();
    let mut terms = Vec::with_capacity(size);
    for t in (0..horizon).rev() {
        let obs_row = crate::sis::obs_log_row(y[t], n, rho, &lf);
        let (head, tail) = out.split_at_mut(t + 1);
        let next = &tail[0];
        let current = &mut head[t];
        for (ix, x) in states.iter().enumerate() {
            let probs = sir_probs(x, rates, network);
            categorical_product_row(&probs.probs, &mut row);
            terms.clear();
            for (jx, &p) in row.iter().enumerate() {
                if p > 0.0 && next[jx] > f64::NEG_INFINITY {
                    terms.push(p.ln() + next[jx]);
                }
            }
            current[ix] = obs_row[x.infected_count()] + logsumexp(&terms);
        }
    }
    Ok(out)
}

/// Exact smoothing distributions `p(x_t | y_{0:T})` for the SIS model,
/// indexed like [`forward_filter_sis`]'s filter output.
pub fn smoothing_marginals_sis(
    rates: &AgentRates,
    network: &Network,
    rho: f64,
    y: &[u64],
) -> Result<Vec<Vec<f64>>> {
    let (forward, predictive) = forward_filter_sis_with_predictive(rates, network, rho, y)?;
    let n = rates.n();
    let space = SisSpace::new(n);
    let size = space.states.len();
    let horizon = y.len() - 1;
    let mut smooth = forward.filter.clone();
    let mut row = Vec::new();
    for t in (0..horizon).rev() {
        // Ratio form of the backward pass: reweight each forward mass by
        // the expected smoothed-to-predicted ratio of its successors.
        let ratio: Vec<f64> = smooth[t + 1]
            .iter()
            .zip(&predictive[t + 1])
            .map(|(&s, &p)| if p > 0.0 { s / p } else { 0.0 })
            .collect();
        for ix in 0..size {
            if smooth[t][ix] == 0.0 {
                continue;
            }
            let probs = infection_probs(&space.states[ix], rates, network);
            bernoulli_product_row(&probs, &mut row);
            let factor: f64 =
                row.iter().zip(&ratio).map(|(&p, &r)| p * r).sum();
            smooth[t][ix] = forward.filter[t][ix] * factor;
        }
    }
    Ok(smooth)
}

/// Full posterior over SIS state trajectories, keyed by the per-time bit
/// masks of the path. Exponential in `N·(T+1)`; guarded.
pub fn trajectory_posterior_sis(
    rates: &AgentRates,
    network: &Network,
    rho: f64,
    y: &[u64],
) -> Result<HashMap<Vec<u32>, f64>> {
    let n = rates.n();
    check_observations(y, n)?;
    let size = 1usize << n;
    let space_size = (size as f64).powi(y.len() as i32);
    if space_size > MAX_TRAJECTORY_SPACE {
        return Err(Error::TooLarge(format!(
            "trajectory space of {space_size:.1e} paths exceeds the enumeration guard"
        )));
    }
    let space = SisSpace::new(n);
    let lf = LogFactorial::new(n);
    let mut mu = Vec::new();
    bernoulli_product_row(&rates.alpha0, &mut mu);
    // Dense per-source transition rows and per-time observation factors.
    let mut rows = Vec::with_capacity(size);
    for x in &space.states {
        let probs = infection_probs(x, rates, network);
        let mut row = Vec::new();
        bernoulli_product_row(&probs, &mut row);
        rows.push(row);
    }
    let g: Vec<Vec<f64>> =
        y.iter().map(|&obs| space.obs_factors(obs, rho, &lf)).collect();

    let mut posterior = HashMap::new();
    let mut path = vec![0u32; y.len()];
    let mut total = 0.0;
    fn recurse(
        t: usize,
        horizon: usize,
        mass: f64,
        path: &mut Vec<u32>,
        rows: &[Vec<f64>],
        g: &[Vec<f64>],
        mu: &[f64],
        posterior: &mut HashMap<Vec<u32>, f64>,
        total: &mut f64,
    ) {
        let size = mu.len();
        for ix in 0..size {
            let step = if t == 0 { mu[ix] } else { rows[path[t - 1] as usize][ix] };
            let mass_here = mass * step * g[t][ix];
            if mass_here == 0.0 {
                continue;
            }
            path[t] = ix as u32;
            if t == horizon {
                posterior.insert(path.clone(), mass_here);
                *total += mass_here;
            } else {
                recurse(t + 1, horizon, mass_here, path, rows, g, mu, posterior, total);
            }
        }
    }
    recurse(0, y.len() - 1, 1.0, &mut path, &rows, &g, &mu, &mut posterior, &mut total);
    if total <= 0.0 {
        return Err(Error::Infeasible("observations carry no trajectory mass".into()));
    }
    for v in posterior.values_mut() {
        *v /= total;
    }
    Ok(posterior)
}

/// Brute-force Poisson-Binomial pmf by enumerating all 2^N indicator
/// configurations; the independent reference for the DP table.
pub fn poibin_brute_force(alpha: &[f64]) -> Vec<f64> {
    let n = alpha.len();
    assert!(n <= 20, "brute-force PoiBin enumerates 2^N configurations");
    let mut pmf = vec![0.0; n + 1];
    for mask in 0u64..(1u64 << n) {
        let mut p = 1.0;
        for (k, &a) in alpha.iter().enumerate() {
            p *= if mask >> k & 1 == 1 { a } else { 1.0 - a };
        }
        pmf[mask.count_ones() as usize] += p;
    }
    pmf
}

/// Both sides of the homogenisation error bounds between
/// `PoiBin(α)` and `PoiBin(ᾱ)`.
#[derive(Clone, Copy, Debug)]
pub struct PmfBounds {
    /// Squared ℓ² distance between the two pmfs.
    pub l2_lhs: f64,
    /// Its claimed bound `(Σ_n |ᾱ_n − α_n|)²`.
    pub l2_rhs: f64,
    /// `KL(PoiBin(ᾱ) ‖ PoiBin(α))`.
    pub kl_lhs: f64,
    /// Its claimed bound `sqrt(Σ_i p̄(i)²/p(i)²) · Σ_n |ᾱ_n − α_n|`.
    pub kl_rhs: f64,
}

/// Evaluates the ℓ² and KL homogenisation bounds for a rate vector and
/// its coarse surrogate. The ℓ² bound is known to fail at N = 1 (factor-2
/// slack is missing); callers assert it only for N ≥ 2.
pub fn poibin_homogenisation_bounds(alpha: &[f64], alpha_bar: &[f64]) -> Result<PmfBounds> {
    if alpha.len() != alpha_bar.len() {
        return Err(Error::DimensionMismatch(format!(
            "rate vectors of lengths {} and {}",
            alpha.len(),
            alpha_bar.len()
        )));
    }
    let p = poibin_table(&ProbVector::new(alpha.to_vec())?).pmf();
    let p_bar = poibin_table(&ProbVector::new(alpha_bar.to_vec())?).pmf();
    let l1_alpha: f64 = alpha
        .iter()
        .zip(alpha_bar)
        .map(|(&a, &b)| (b - a).abs())
        .sum();
    let l2_lhs: f64 = p.iter().zip(&p_bar).map(|(&a, &b)| (b - a) * (b - a)).sum();
    let mut kl_lhs = 0.0;
    let mut ratio_sq = 0.0;
    for (&pi, &pbi) in p.iter().zip(&p_bar) {
        if pbi > 0.0 {
            if pi <= 0.0 {
                kl_lhs = f64::INFINITY;
                ratio_sq = f64::INFINITY;
                break;
            }
            kl_lhs += pbi * (pbi / pi).ln();
        }
        if pi > 0.0 {
            ratio_sq += (pbi / pi) * (pbi / pi);
        }
    }
    Ok(PmfBounds {
        l2_lhs,
        l2_rhs: l1_alpha * l1_alpha,
        kl_lhs,
        kl_rhs: ratio_sq.sqrt() * l1_alpha,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::sumbin_pmf;
    use crate::model::{agent_rates, Covariates, ModelParams};
    use crate::streams::stream_rng;
    use rand::Rng;

    fn homogeneous_rates(n: usize, a0: f64, lam: f64, gam: f64) -> AgentRates {
        AgentRates {
            alpha0: ProbVector::new(vec![a0; n]).unwrap(),
            lambda: ProbVector::new(vec![lam; n]).unwrap(),
            gamma: ProbVector::new(vec![gam; n]).unwrap(),
            lambda_bar: lam,
            gamma_bar: gam,
            clusters: None,
        }
    }

    fn random_rates(n: usize, seed: u64) -> AgentRates {
        let mut rng = stream_rng(seed, "oracle-rates", &[n as u64]);
        let draw = |rng: &mut rand_chacha::ChaCha8Rng| {
            (0..n).map(|_| rng.gen_range(0.05..0.95)).collect::<Vec<f64>>()
        };
        let lambda = draw(&mut rng);
        let gamma = draw(&mut rng);
        let lambda_bar = lambda.iter().sum::<f64>() / n as f64;
        let gamma_bar = gamma.iter().sum::<f64>() / n as f64;
        AgentRates {
            alpha0: ProbVector::new(draw(&mut rng)).unwrap(),
            lambda: ProbVector::new(lambda).unwrap(),
            gamma: ProbVector::new(gamma).unwrap(),
            lambda_bar,
            gamma_bar,
            clusters: None,
        }
    }

    #[test]
    fn forward_sis_matches_trajectory_enumeration() {
        let rates = random_rates(3, 11);
        let net = Network::complete(3).unwrap();
        let y = vec![1, 2, 0];
        let forward = forward_filter_sis(&rates, &net, 0.7, &y).unwrap();
        // Independent total mass from the unnormalized path sum.
        let posterior = trajectory_posterior_sis(&rates, &net, 0.7, &y).unwrap();
        let total: f64 = posterior.values().sum();
        assert!((total - 1.0).abs() < 1e-12);
        // Marginal at the last time from paths vs filter.
        let mut last = [0.0; 8];
        for (path, &p) in &posterior {
            last[path[2] as usize] += p;
        }
        for ix in 0..8 {
            assert!((last[ix] - forward.filter[2][ix]).abs() < 1e-12);
        }
        assert!(forward.log_likelihood.is_finite());
    }

    #[test]
    fn forward_sis_loglik_matches_direct_path_sum() {
        // Recompute the marginal likelihood by brute-force summation of
        // unnormalized path masses, fully independently of the filter.
        let rates = random_rates(3, 17);
        let net = Network::complete(3).unwrap();
        let y = vec![0, 1, 1];
        let rho = 0.6;
        let forward = forward_filter_sis(&rates, &net, rho, &y).unwrap();
        let mut total = 0.0;
        let space = SisSpace::new(3);
        let lf = LogFactorial::new(3);
        for m0 in 0..8usize {
            for m1 in 0..8usize {
                for m2 in 0..8usize {
                    let x0 = &space.states[m0];
                    let x1 = &space.states[m1];
                    let x2 = &space.states[m2];
                    let mut mass = 1.0;
                    for (agent, &a) in rates.alpha0.iter().enumerate() {
                        mass *= if x0.get(agent) { a } else { 1.0 - a };
                    }
                    for (src, dst) in [(x0, x1), (x1, x2)] {
                        let probs = infection_probs(src, &rates, &net);
                        for agent in 0..3 {
                            let a = probs[agent];
                            mass *= if dst.get(agent) { a } else { 1.0 - a };
                        }
                    }
                    for (t, x) in [x0, x1, x2].into_iter().enumerate() {
                        let row = crate::sis::obs_log_row(y[t], 3, rho, &lf);
                        mass *= row[x.count_ones()].exp();
                    }
                    total += mass;
                }
            }
        }
        assert!((forward.log_likelihood - total.ln()).abs() < 1e-12);
    }

    #[test]
    fn forward_sis_self_inclusive_equals_count_chain() {
        // Under homogeneous rates on the self-inclusive complete graph the
        // infected count is Markov: infections Bin(N-i, λ i/N), stays
        // Bin(i, 1-γ). An independent count-space forward pass must agree.
        let n = 6;
        let (lam, gam, rho) = (0.7, 0.3, 0.8);
        let rates = homogeneous_rates(n, 0.25, lam, gam);
        let net = Network::complete_self_inclusive(n).unwrap();
        let y = vec![2, 3, 1, 0, 2];
        let forward = forward_filter_sis(&rates, &net, rho, &y).unwrap();

        let lf = LogFactorial::new(n);
        let init = poibin_table(&rates.alpha0).pmf();
        let mut alpha: Vec<f64> = Vec::new();
        let mut ll = 0.0;
        for (t, &obs) in y.iter().enumerate() {
            let pred = if t == 0 {
                init.clone()
            } else {
                let mut next = vec![0.0; n + 1];
                for (i, &mass) in alpha.iter().enumerate() {
                    if mass == 0.0 {
                        continue;
                    }
                    let law = sumbin_pmf(n - i, lam * i as f64 / n as f64, i, 1.0 - gam);
                    for j in 0..=n {
                        next[j] += mass * law.mass(j as i64);
                    }
                }
                next
            };
            let row = crate::sis::obs_log_row(obs, n, rho, &lf);
            let current: Vec<f64> =
                pred.iter().enumerate().map(|(i, &p)| p * row[i].exp()).collect();
            let scale: f64 = current.iter().sum();
            ll += scale.ln();
            alpha = current.iter().map(|&v| v / scale).collect();
        }
        assert!((forward.log_likelihood - ll).abs() < 1e-12);
    }

    #[test]
    fn exact_bif_sis_reproduces_likelihood_from_initial_slice() {
        let rates = random_rates(4, 23);
        let net = Network::complete(4).unwrap();
        let y = vec![1, 0, 2, 1];
        let rho = 0.75;
        let lpsi = exact_log_bif_sis(&rates, &net, rho, &y).unwrap();
        let mut mu = Vec::new();
        bernoulli_product_row(&rates.alpha0, &mut mu);
        let terms: Vec<f64> = mu
            .iter()
            .zip(&lpsi[0])
            .filter(|(&m, _)| m > 0.0)
            .map(|(&m, &lp)| m.ln() + lp)
            .collect();
        let forward = forward_filter_sis(&rates, &net, rho, &y).unwrap();
        assert!((logsumexp(&terms) - forward.log_likelihood).abs() < 1e-10);
    }

    #[test]
    fn exact_bif_sis_is_count_measurable_when_self_inclusive() {
        let n = 6;
        let rates = homogeneous_rates(n, 0.3, 0.65, 0.4);
        let net = Network::complete_self_inclusive(n).unwrap();
        let y = vec![2, 1, 3];
        let lpsi = exact_log_bif_sis(&rates, &net, 0.7, &y).unwrap();
        let space = SisSpace::new(n);
        for slice in &lpsi {
            let mut by_count: Vec<Option<f64>> = vec![None; n + 1];
            for (ix, x) in space.states.iter().enumerate() {
                let i = x.count_ones();
                match by_count[i] {
                    None => by_count[i] = Some(slice[ix]),
                    Some(v) => {
                        if v == f64::NEG_INFINITY {
                            assert_eq!(slice[ix], f64::NEG_INFINITY);
                        } else {
                            assert!((slice[ix] - v).abs() <= 1e-12 * v.abs().max(1.0));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn exact_bif_sir_reproduces_likelihood() {
        let rates = random_rates(3, 31);
        let net = Network::complete(3).unwrap();
        let y = vec![1, 1, 0];
        let rho = 0.8;
        let lpsi = exact_log_bif_sir(&rates, &net, rho, &y).unwrap();
        let init_triples: Vec<[f64; 3]> =
            rates.alpha0.iter().map(|&a| [1.0 - a, a, 0.0]).collect();
        let mut mu = Vec::new();
        categorical_product_row(&init_triples, &mut mu);
        let terms: Vec<f64> = mu
            .iter()
            .zip(&lpsi[0])
            .filter(|(&m, _)| m > 0.0)
            .map(|(&m, &lp)| m.ln() + lp)
            .collect();
        let forward = forward_filter_sir(&rates, &net, rho, &y).unwrap();
        assert!((logsumexp(&terms) - forward.log_likelihood).abs() < 1e-10);
    }

    #[test]
    fn sir_forward_matches_exhaustive_paths_tiny() {
        let rates = random_rates(2, 41);
        let net = Network::complete(2).unwrap();
        let y = vec![1, 0];
        let rho = 0.9;
        let forward = forward_filter_sir(&rates, &net, rho, &y).unwrap();
        let lf = LogFactorial::new(2);
        let mut total = 0.0;
        for ix0 in 0..9usize {
            let x0 = SirState::from_trit_index(2, ix0);
            if x0.recovered_count() > 0 {
                continue;
            }
            let mut m0 = 1.0;
            for agent in 0..2 {
                let a = rates.alpha0[agent];
                m0 *= if x0.agent(agent) == 1 { a } else { 1.0 - a };
            }
            let row0 = crate::sis::obs_log_row(y[0], 2, rho, &lf);
            m0 *= row0[x0.infected_count()].exp();
            if m0 == 0.0 {
                continue;
            }
            let probs = sir_probs(&x0, &rates, &net);
            for ix1 in 0..9usize {
                let x1 = SirState::from_trit_index(2, ix1);
                let mut m1 = m0;
                for agent in 0..2 {
                    m1 *= probs.probs[agent][x1.agent(agent) as usize];
                }
                let row1 = crate::sis::obs_log_row(y[1], 2, rho, &lf);
                m1 *= row1[x1.infected_count()].exp();
                total += m1;
            }
        }
        assert!((forward.log_likelihood - total.ln()).abs() < 1e-12);
    }

    #[test]
    fn smoothing_matches_trajectory_marginals() {
        let rates = random_rates(3, 53);
        let net = Network::complete(3).unwrap();
        let y = vec![1, 2, 1];
        let rho = 0.65;
        let smooth = smoothing_marginals_sis(&rates, &net, rho, &y).unwrap();
        let posterior = trajectory_posterior_sis(&rates, &net, rho, &y).unwrap();
        for t in 0..3 {
            let mut marginal = [0.0; 8];
            for (path, &p) in &posterior {
                marginal[path[t] as usize] += p;
            }
            let total: f64 = smooth[t].iter().sum();
            assert!((total - 1.0).abs() < 1e-10);
            for ix in 0..8 {
                assert!((marginal[ix] - smooth[t][ix]).abs() < 1e-10, "t={t} ix={ix}");
            }
        }
        // Terminal smoothing equals terminal filtering.
        let forward = forward_filter_sis(&rates, &net, rho, &y).unwrap();
        for ix in 0..8 {
            assert!((smooth[2][ix] - forward.filter[2][ix]).abs() < 1e-12);
        }
    }

    #[test]
    fn brute_force_poibin_agrees_with_table() {
        let mut rng = stream_rng(67, "oracle-poibin", &[]);
        for _ in 0..20 {
            let n = rng.gen_range(1..=10);
            let alpha: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
            let table = poibin_table(&ProbVector::new(alpha.clone()).unwrap()).pmf();
            let brute = poibin_brute_force(&alpha);
            for (a, b) in table.iter().zip(&brute) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn homogenisation_bounds_zero_at_equal_rates() {
        let alpha = [0.2, 0.5, 0.7];
        let bounds = poibin_homogenisation_bounds(&alpha, &alpha).unwrap();
        assert!(bounds.l2_lhs.abs() < 1e-15);
        assert!(bounds.l2_rhs.abs() < 1e-15);
        assert!(bounds.kl_lhs.abs() < 1e-15);
    }

    #[test]
    fn kl_bound_holds_on_random_instances() {
        let mut rng = stream_rng(71, "oracle-kl", &[]);
        for trial in 0..50 {
            let n = rng.gen_range(2..=8);
            let alpha: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..0.95)).collect();
            let mean = alpha.iter().sum::<f64>() / n as f64;
            let alpha_bar = vec![mean; n];
            let b = poibin_homogenisation_bounds(&alpha, &alpha_bar).unwrap();
            assert!(b.kl_lhs >= -1e-12, "trial {trial}");
            assert!(b.kl_lhs <= b.kl_rhs + 1e-12, "trial {trial}: {b:?}");
        }
    }

    #[test]
    fn l2_bound_fails_at_population_one() {
        // Documented edge case: with a single agent the claimed ℓ² bound
        // is off by a factor of two, so it is recorded rather than
        // asserted. p = (0.5, 0.5) vs p̄ = (0.4, 0.6) gives lhs 0.02,
        // rhs 0.01.
        let b = poibin_homogenisation_bounds(&[0.5], &[0.6]).unwrap();
        assert!((b.l2_lhs - 0.02).abs() < 1e-12);
        assert!((b.l2_rhs - 0.01).abs() < 1e-12);
        assert!(b.l2_lhs > b.l2_rhs);
        // The factor-2 corrected bound does hold.
        assert!(b.l2_lhs <= 2.0 * b.l2_rhs + 1e-12);
    }

    #[test]
    fn l2_bound_holds_for_two_or_more_agents() {
        let mut rng = stream_rng(73, "oracle-l2", &[]);
        for _ in 0..50 {
            let n = rng.gen_range(2..=8);
            let alpha: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..0.95)).collect();
            let mean = alpha.iter().sum::<f64>() / n as f64;
            let b = poibin_homogenisation_bounds(&alpha, &vec![mean; n]).unwrap();
            assert!(b.l2_lhs <= b.l2_rhs + 1e-12, "{b:?}");
        }
    }

    #[test]
    fn guards_reject_oversized_populations() {
        let rates = homogeneous_rates(15, 0.2, 0.5, 0.5);
        let net = Network::complete(15).unwrap();
        assert!(matches!(
            forward_filter_sis(&rates, &net, 0.5, &[1]),
            Err(Error::TooLarge(_))
        ));
        let rates = homogeneous_rates(10, 0.2, 0.5, 0.5);
        let net = Network::complete(10).unwrap();
        assert!(matches!(
            forward_filter_sir(&rates, &net, 0.5, &[1]),
            Err(Error::TooLarge(_))
        ));
    }

    #[test]
    fn covariate_link_round_trip_matches_enumeration() {
        // End-to-end: rates from covariates, then likelihood consistency
        // between the full forward pass and the BIF initial slice.
        let covariates = Covariates::new(3, 2, vec![1.0, 0.4, 1.0, -0.3, 1.0, 1.1]).unwrap();
        let theta = ModelParams {
            beta0: vec![-1.0, 0.5],
            beta_lambda: vec![0.2, 0.8],
            beta_gamma: vec![-0.4, 0.1],
            rho: 0.7,
        };
        let rates = agent_rates(&theta, &covariates).unwrap();
        let net = Network::complete(3).unwrap();
        let y = vec![1, 2];
        let forward = forward_filter_sis(&rates, &net, theta.rho, &y).unwrap();
        let lpsi = exact_log_bif_sis(&rates, &net, theta.rho, &y).unwrap();
        let mut mu = Vec::new();
        bernoulli_product_row(&rates.alpha0, &mut mu);
        let terms: Vec<f64> = mu
            .iter()
            .zip(&lpsi[0])
            .map(|(&m, &lp)| m.ln() + lp)
            .collect();
        assert!((logsumexp(&terms) - forward.log_likelihood).abs() < 1e-10);
    }
}
