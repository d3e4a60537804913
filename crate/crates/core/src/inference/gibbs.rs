//! Gibbs samplers over agent trajectories: single-site conditionals, count-
//! preserving swap moves, exact block updates via forward–backward sampling,
//! and a driver that mixes trajectory kernels with a Metropolis step on the
//! model parameters given the complete data.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::checks::path_log_density_sis;
use crate::error::{Error, Result};
use crate::model::{agent_rates, AgentRates, Covariates, ModelParams, Network};
use crate::numeric::{logaddexp, logsumexp};
use crate::sis::{infection_probs, obs_logpmf};
use crate::smc::sample_log_categorical;
use crate::state::PopulationState;
use crate::streams::stream_rng;

use super::{rw_propose, theta_to_vec, vec_to_theta, Prior};

fn ln_bernoulli(outcome: bool, p: f64) -> f64 {
    let mass = if outcome { p } else { 1.0 - p };
    if mass > 0.0 {
        mass.ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// Log density of the time-`t` slice of the trajectory conditional: the
/// entry factor of `x_t` given `x_{t-1}` (or the initial rates at t = 0),
/// the observation factor, and the transition factor into `x_{t+1}` when one
/// exists. Factors not involving `x_t` are omitted, which is harmless
/// because every caller only uses differences or ratios at fixed `t`.
fn slice_log_density(
    trajectory: &[PopulationState],
    rates: &AgentRates,
    network: &Network,
    rho: f64,
    y: &[u64],
    t: usize,
    x_t: &PopulationState,
) -> f64 {
    let mut lp = obs_logpmf(y[t], x_t.count_ones(), rho);
    if lp == f64::NEG_INFINITY {
        return lp;
    }
    if t == 0 {
        for (agent, &a) in rates.alpha0.iter().enumerate() {
            lp += ln_bernoulli(x_t.get(agent), a);
        }
    } else {
        let probs = infection_probs(&trajectory[t - 1], rates, network);
        for (agent, &p) in probs.iter().enumerate() {
            lp += ln_bernoulli(x_t.get(agent), p);
        }
    }
    if lp == f64::NEG_INFINITY {
        return lp;
    }
    if t + 1 < trajectory.len() {
        let probs = infection_probs(x_t, rates, network);
        for (agent, &p) in probs.iter().enumerate() {
            lp += ln_bernoulli(trajectory[t + 1].get(agent), p);
        }
    }
    lp
}

/// Resamples the single state `x_t^n` from its exact full conditional given
/// the rest of the trajectory and the observations.
pub fn gibbs_single_site<R: Rng + ?Sized>(
    rng: &mut R,
    trajectory: &mut [PopulationState],
    rates: &AgentRates,
    network: &Network,
    rho: f64,
    y: &[u64],
    t: usize,
    agent: usize,
) {
    let mut lp = [0.0f64; 2];
    for (value, slot) in lp.iter_mut().enumerate() {
        let mut candidate = trajectory[t].clone();
        candidate.set(agent, value == 1);
        *slot = slice_log_density(trajectory, rates, network, rho, y, t, &candidate);
    }
    let top = lp[0].max(lp[1]);
    if top == f64::NEG_INFINITY {
        // Both values are impossible; only reachable from an infeasible
        // trajectory, where the site is left untouched.
        return;
    }
    let w0 = (lp[0] - top).exp();
    let w1 = (lp[1] - top).exp();
    let infected = rng.gen::<f64>() * (w0 + w1) < w1;
    trajectory[t].set(agent, infected);
}

/// Count-preserving Metropolis move: proposes exchanging the states of one
/// infected and one susceptible agent at time `t` and accepts with the exact
/// conditional ratio (the observation factor cancels since the infected
/// count is unchanged). Returns whether a swap was applied; times where all
/// agents share one state are left untouched.
pub fn gibbs_swap<R: Rng + ?Sized>(
    rng: &mut R,
    trajectory: &mut [PopulationState],
    rates: &AgentRates,
    network: &Network,
    rho: f64,
    y: &[u64],
    t: usize,
) -> bool {
    let n = trajectory[t].len();
    let infected: Vec<usize> = trajectory[t].ones().collect();
    if infected.is_empty() || infected.len() == n {
        return false;
    }
    let susceptible: Vec<usize> = (0..n).filter(|&a| !trajectory[t].get(a)).collect();
    let donor = infected[rng.gen_range(0..infected.len())];
    let receiver = susceptible[rng.gen_range(0..susceptible.len())];

    let current = trajectory[t].clone();
    let mut candidate = current.clone();
    candidate.set(donor, false);
    candidate.set(receiver, true);

    let candidate_lp = slice_log_density(trajectory, rates, network, rho, y, t, &candidate);
    if candidate_lp == f64::NEG_INFINITY {
        return false;
    }
    let current_lp = slice_log_density(trajectory, rates, network, rho, y, t, &current);
    let log_ratio = candidate_lp - current_lp;
    if log_ratio >= 0.0 || rng.gen::<f64>().ln() < log_ratio {
        trajectory[t] = candidate;
        true
    } else {
        false
    }
}

/// Jointly resamples the trajectories of a small agent block from their
/// exact conditional given the complement and all observations, via a
/// forward–backward pass over the 2^B block configurations. With the block
/// equal to the whole population this is an exact smoothing draw. Cost is
/// O((2^{2B} + 2^B·N)·T).
pub fn gibbs_block<R: Rng + ?Sized>(
    rng: &mut R,
    trajectory: &mut [PopulationState],
    rates: &AgentRates,
    network: &Network,
    rho: f64,
    y: &[u64],
    agents: &[usize],
) -> Result<()> {
    if agents.is_empty() {
        return Ok(());
    }
    if agents.len() > 10 {
        return Err(Error::TooLarge(format!(
            "block updates support at most 10 agents, got {}",
            agents.len()
        )));
    }
    let n = rates.n();
    let mut in_block = vec![false; n];
    for &agent in agents {
        if agent >= n {
            return Err(Error::InvalidArgument(format!(
                "block agent {agent} outside population of size {n}"
            )));
        }
        if std::mem::replace(&mut in_block[agent], true) {
            return Err(Error::InvalidArgument(format!(
                "block lists agent {agent} twice"
            )));
        }
    }

    let horizon = trajectory.len();
    let configs = 1usize << agents.len();
    let apply = |base: &PopulationState, config: usize| -> PopulationState {
        let mut x = base.clone();
        for (bit, &agent) in agents.iter().enumerate() {
            x.set(agent, config >> bit & 1 == 1);
        }
        x
    };
    let block_entry = |config: usize, probs: &[f64]| -> f64 {
        let mut lp = 0.0;
        for (bit, &agent) in agents.iter().enumerate() {
            lp += ln_bernoulli(config >> bit & 1 == 1, probs[agent]);
        }
        lp
    };
    // Complement transition factor attached to (t, config): the block state
    // at time t influences every other agent's step to t + 1.
    let complement_exit = |t: usize, probs: &[f64]| -> f64 {
        let mut lp = 0.0;
        for (agent, &p) in probs.iter().enumerate() {
            if !in_block[agent] {
                lp += ln_bernoulli(trajectory[t + 1].get(agent), p);
            }
        }
        lp
    };

    // Forward pass over block configurations; observation factors are folded
    // into each message.
    let mut messages: Vec<Vec<f64>> = Vec::with_capacity(horizon);
    let mut current: Vec<f64> = (0..configs)
        .map(|config| {
            let x = apply(&trajectory[0], config);
            let mut lp = obs_logpmf(y[0], x.count_ones(), rho);
            for (bit, &agent) in agents.iter().enumerate() {
                lp += ln_bernoulli(config >> bit & 1 == 1, rates.alpha0[agent]);
            }
            lp
        })
        .collect();
    messages.push(current.clone());
    for t in 0..horizon - 1 {
        let mut next = vec![f64::NEG_INFINITY; configs];
        for (config, &message) in current.iter().enumerate() {
            if message == f64::NEG_INFINITY {
                continue;
            }
            let x = apply(&trajectory[t], config);
            let probs = infection_probs(&x, rates, network);
            let base = message + complement_exit(t, &probs);
            if base == f64::NEG_INFINITY {
                continue;
            }
            for (successor, slot) in next.iter_mut().enumerate() {
                *slot = logaddexp(*slot, base + block_entry(successor, &probs));
            }
        }
        for (config, slot) in next.iter_mut().enumerate() {
            if *slot > f64::NEG_INFINITY {
                let x = apply(&trajectory[t + 1], config);
                *slot += obs_logpmf(y[t + 1], x.count_ones(), rho);
            }
        }
        current = next;
        messages.push(current.clone());
    }

    // Backward sampling; transition scores are recomputed per step so only
    // the forward messages are stored.
    let total = logsumexp(&messages[horizon - 1]);
    if !total.is_finite() {
        return Err(Error::Infeasible(
            "block conditional has no feasible configuration".into(),
        ));
    }
    let mut chosen = vec![0usize; horizon];
    chosen[horizon - 1] = sample_log_categorical(rng, &messages[horizon - 1], total);
    for t in (0..horizon - 1).rev() {
        let successor = chosen[t + 1];
        let scores: Vec<f64> = messages[t]
            .iter()
            .enumerate()
            .map(|(config, &message)| {
                if message == f64::NEG_INFINITY {
                    return f64::NEG_INFINITY;
                }
                let x = apply(&trajectory[t], config);
                let probs = infection_probs(&x, rates, network);
                message + complement_exit(t, &probs) + block_entry(successor, &probs)
            })
            .collect();
        let step_total = logsumexp(&scores);
        chosen[t] = sample_log_categorical(rng, &scores, step_total);
    }
    for (t, state) in trajectory.iter_mut().enumerate() {
        for (bit, &agent) in agents.iter().enumerate() {
            state.set(agent, chosen[t] >> bit & 1 == 1);
        }
    }
    Ok(())
}

/// Mixture weights and step sizes for the Gibbs driver.
#[derive(Clone, Debug)]
pub struct GibbsConfig {
    /// Weight of a systematic single-site scan over all (t, agent) pairs.
    pub single_site_weight: f64,
    /// Weight of performing N random swap updates at random times.
    pub swap_weight: f64,
    /// Weight of a block sweep over a random partition of the agents.
    pub block_weight: f64,
    /// Agents per block in the block sweep (at most 10).
    pub block_size: usize,
    /// Whether to interleave a Metropolis update of the parameters.
    pub update_theta: bool,
    /// Random-walk step size of the parameter update.
    pub theta_step_sd: f64,
    /// Optional freeze mask over the unconstrained parameter vector.
    pub update_mask: Option<Vec<bool>>,
}

impl Default for GibbsConfig {
    fn default() -> Self {
        Self {
            single_site_weight: 0.5,
            swap_weight: 0.5,
            block_weight: 0.0,
            block_size: 5,
            update_theta: true,
            theta_step_sd: 0.08,
            update_mask: None,
        }
    }
}

/// One retained state of the Gibbs chain.
#[derive(Clone, Debug)]
pub struct GibbsSample {
    pub theta: ModelParams,
    /// Complete-data log density of the current trajectory and observations.
    pub log_complete: f64,
    /// Whether the parameter move of this iteration was accepted.
    pub accepted: bool,
}

/// Chain states plus the final latent trajectory.
#[derive(Clone, Debug)]
pub struct GibbsOutput {
    pub samples: Vec<GibbsSample>,
    pub trajectory: Vec<PopulationState>,
}

/// Data-augmentation Gibbs sampler: each iteration applies one trajectory
/// kernel drawn from the configured mixture (systematic single-site scan,
/// N random swaps, or a block sweep) and then a random-walk Metropolis step
/// on the parameters given the complete data. Zero iterations return the
/// initial state. The first sample is the initial state.
pub fn run_gibbs(
    seed: u64,
    covariates: &Covariates,
    network: &Network,
    y: &[u64],
    init: &ModelParams,
    prior: &Prior,
    config: &GibbsConfig,
    iters: usize,
) -> Result<GibbsOutput> {
    let n = covariates.n();
    let d = covariates.d();
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
    if y.is_empty() {
        return Err(Error::InvalidArgument("no observations supplied".into()));
    }
    if let Some(&worst) = y.iter().max() {
        if worst as usize > n {
            return Err(Error::Infeasible(format!(
                "observation {worst} exceeds population size {n}"
            )));
        }
    }
    let weights = [
        config.single_site_weight,
        config.swap_weight,
        config.block_weight,
    ];
    if weights.iter().any(|&w| !(w >= 0.0)) {
        return Err(Error::InvalidArgument("kernel weights must be non-negative".into()));
    }
    let weight_total: f64 = weights.iter().sum();
    if weight_total <= 0.0 {
        return Err(Error::InvalidArgument("kernel weights must not all vanish".into()));
    }
    if config.block_weight > 0.0 && !(1..=10).contains(&config.block_size) {
        return Err(Error::InvalidArgument(format!(
            "block size {} outside 1..=10",
            config.block_size
        )));
    }
    if let Some(mask) = &config.update_mask {
        if mask.len() != 3 * d + 1 {
            return Err(Error::DimensionMismatch(format!(
                "update mask has {} entries, parameter vector has {}",
                mask.len(),
                3 * d + 1
            )));
        }
    }

    let mut theta = init.clone();
    let mut theta_vec = theta_to_vec(init);
    let mut rates = agent_rates(init, covariates)?;

    // All-infected initial trajectory: feasible for any observation series
    // because the infected count dominates every y_t.
    let mut trajectory: Vec<PopulationState> = (0..y.len())
        .map(|_| {
            let mut x = PopulationState::zeros(n);
            for agent in 0..n {
                x.set(agent, true);
            }
            x
        })
        .collect();
    let initial_density = path_log_density_sis(&rates, network, theta.rho, &trajectory, y);
    if !initial_density.is_finite() {
        return Err(Error::Infeasible(
            "all-infected initial trajectory has zero density under the model".into(),
        ));
    }

    let mut rng = stream_rng(seed, "gibbs", &[]);
    let mut samples = Vec::with_capacity(iters + 1);
    samples.push(GibbsSample {
        theta: theta.clone(),
        log_complete: initial_density,
        accepted: false,
    });

    for _ in 0..iters {
        let pick = rng.gen::<f64>() * weight_total;
        if pick < weights[0] {
            for t in 0..y.len() {
                for agent in 0..n {
                    gibbs_single_site(
                        &mut rng,
                        &mut trajectory,
                        &rates,
                        network,
                        theta.rho,
                        y,
                        t,
                        agent,
                    );
                }
            }
        } else if pick < weights[0] + weights[1] {
            for _ in 0..n {
                let t = rng.gen_range(0..y.len());
                gibbs_swap(&mut rng, &mut trajectory, &rates, network, theta.rho, y, t);
            }
        } else {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            for block in order.chunks(config.block_size) {
                gibbs_block(
                    &mut rng,
                    &mut trajectory,
                    &rates,
                    network,
                    theta.rho,
                    y,
                    block,
                )?;
            }
        }

        let mut accepted = false;
        if config.update_theta {
            let current_lp = prior.log_density(&theta_vec)
                + path_log_density_sis(&rates, network, theta.rho, &trajectory, y);
            let mut proposal = rw_propose(&mut rng, &theta_vec, config.theta_step_sd);
            if let Some(mask) = &config.update_mask {
                for (coord, (p, &keep)) in proposal.iter_mut().zip(mask).enumerate() {
                    if !keep {
                        *p = theta_vec[coord];
                    }
                }
            }
            let candidate = vec_to_theta(&proposal, d);
            let candidate_rates = agent_rates(&candidate, covariates)?;
            let candidate_lp = prior.log_density(&proposal)
                + path_log_density_sis(&candidate_rates, network, candidate.rho, &trajectory, y);
            if candidate_lp > f64::NEG_INFINITY {
                let log_ratio = candidate_lp - current_lp;
                if log_ratio >= 0.0 || rng.gen::<f64>().ln() < log_ratio {
                    theta = candidate;
                    theta_vec = proposal;
                    rates = candidate_rates;
                    accepted = true;
                }
            }
        }

        samples.push(GibbsSample {
            theta: theta.clone(),
            log_complete: path_log_density_sis(&rates, network, theta.rho, &trajectory, y),
            accepted,
        });
    }
    Ok(GibbsOutput {
        samples,
        trajectory,
    })
}
