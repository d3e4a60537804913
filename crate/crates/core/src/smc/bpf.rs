//! Bootstrap particle filters: prior-dynamics proposals weighted by the
//! observation density.

use rand::Rng;

use crate::error::Result;
use crate::model::{AgentRates, Network};
use crate::numeric::{normalize_log_weights, LogFactorial};
use crate::sir::{sir_probs, SirState};
use crate::sis::infection_probs;
use crate::state::PopulationState;
use crate::streams::stream_rng;

use super::{
    ess, multinomial_resample, validate_filter_inputs, FilterOutput, ParticleSystem,
};

fn sample_bernoulli_with_logp<R: Rng + ?Sized>(
    rng: &mut R,
    probs: &[f64],
) -> (PopulationState, f64) {
    let mut x = PopulationState::zeros(probs.len());
    let mut logp = 0.0;
    for (agent, &a) in probs.iter().enumerate() {
        if rng.gen::<f64>() < a {
            x.set(agent, true);
            logp += a.ln();
        } else {
            logp += (1.0 - a).ln();
        }
    }
    (x, logp)
}

fn sample_sir_with_logp<R: Rng + ?Sized>(
    rng: &mut R,
    probs: &[[f64; 3]],
) -> (SirState, f64) {
    let mut x = SirState::susceptible(probs.len());
    let mut logp = 0.0;
    for (agent, triple) in probs.iter().enumerate() {
        let u = rng.gen::<f64>();
        let phase = if u < triple[1] {
            1u8
        } else if u < triple[1] + triple[0] {
            0u8
        } else {
            2u8
        };
        x.set_agent(agent, phase);
        logp += triple[phase as usize].ln();
    }
    (x, logp)
}

/// Shared skeleton: propagate with the prior dynamics, weight by the
/// observation pmf, resample multinomially. `init` and `step` return the
/// new state and its log proposal density; `infected` reads the count the
/// observation thinning applies to.
fn bootstrap_skeleton<S: Clone>(
    n: usize,
    rho: f64,
    y: &[u64],
    particles: usize,
    seed: u64,
    tag: &str,
    mut init: impl FnMut(&mut rand_chacha::ChaCha8Rng) -> (S, f64),
    mut step: impl FnMut(&mut rand_chacha::ChaCha8Rng, &S) -> (S, f64),
    infected: impl Fn(&S) -> usize,
) -> Result<FilterOutput<S>> {
    validate_filter_inputs(n, y, rho, particles)?;
    let lf = LogFactorial::new(n);
    let mut system = ParticleSystem::new(particles);
    let mut log_likelihood = 0.0;
    let mut normalized = vec![0.0; particles];

    for (t, &obs) in y.iter().enumerate() {
        let obs_row = crate::sis::obs_log_row(obs, n, rho, &lf);
        let mut states = Vec::with_capacity(particles);
        let mut proposal = Vec::with_capacity(particles);
        if t == 0 {
            for p in 0..particles {
                let mut rng = stream_rng(seed, tag, &[0, p as u64]);
                let (x, lq) = init(&mut rng);
                states.push(x);
                proposal.push(lq);
            }
        } else {
            let mut rng = stream_rng(seed, &format!("{tag}/resample"), &[t as u64]);
            let ancestors = multinomial_resample(&mut rng, &normalized, particles);
            let parents = &system.states[t - 1];
            for (p, &a) in ancestors.iter().enumerate() {
                let mut rng = stream_rng(seed, tag, &[t as u64, p as u64]);
                let (x, lq) = step(&mut rng, &parents[a]);
                states.push(x);
                proposal.push(lq);
            }
            system.ancestors.push(ancestors);
        }
        let log_weights: Vec<f64> = states
            .iter()
            .map(|x| {
                let i = infected(x);
                system.record_slack(i, obs);
                obs_row[i]
            })
            .collect();
        let total = normalize_log_weights(&log_weights, &mut normalized);
        let factor = total - (particles as f64).ln();
        system.states.push(states);
        system.proposal_log_density.push(proposal);
        system.ess.push(ess(&normalized));
        system.log_step_factors.push(factor);
        system.log_weights.push(log_weights);
        if total == f64::NEG_INFINITY {
            system.collapsed = true;
            system.collapse_time = Some(t);
            system.final_log_weights = vec![f64::NEG_INFINITY; particles];
            return Ok(FilterOutput { log_likelihood: f64::NEG_INFINITY, system });
        }
        log_likelihood += factor;
    }
    system.final_log_weights = system.log_weights.last().expect("nonempty run").clone();
    Ok(FilterOutput { log_likelihood, system })
}

/// Bootstrap particle filter for the SIS model.
pub fn run_bpf_sis(
    rates: &AgentRates,
    network: &Network,
    rho: f64,
    y: &[u64],
    particles: usize,
    seed: u64,
) -> Result<FilterOutput<PopulationState>> {
    bootstrap_skeleton(
        rates.n(),
        rho,
        y,
        particles,
        seed,
        "bpf-sis",
        |rng| sample_bernoulli_with_logp(rng, &rates.alpha0),
        |rng, parent| {
            let probs = infection_probs(parent, rates, network);
            sample_bernoulli_with_logp(rng, &probs)
        },
        PopulationState::count_ones,
    )
}

/// Bootstrap particle filter for the SIR model.
pub fn run_bpf_sir(
    rates: &AgentRates,
    network: &Network,
    rho: f64,
    y: &[u64],
    particles: usize,
    seed: u64,
) -> Result<FilterOutput<SirState>> {
    bootstrap_skeleton(
        rates.n(),
        rho,
        y,
        particles,
        seed,
        "bpf-sir",
        |rng| {
            let triples: Vec<[f64; 3]> =
                rates.alpha0.iter().map(|&a| [1.0 - a, a, 0.0]).collect();
            sample_sir_with_logp(rng, &triples)
        },
        |rng, parent: &SirState| {
            let probs = sir_probs(parent, rates, network);
            sample_sir_with_logp(rng, &probs.probs)
        },
        SirState::infected_count,
    )
}
