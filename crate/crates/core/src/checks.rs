//! Independent joint-density evaluators for complete state trajectories.
//!
//! These walk a path agent by agent with nothing shared with the particle
//! filters' internals, so they serve as the reference side of
//! weight-telescoping checks: for any proposal with density `q`, the
//! product of filter weights along a surviving path must equal
//! `p(x_{0:T}, y_{0:T}) − q(x_{0:T})` in log space.

use crate::model::{AgentRates, Network};
use crate::sir::{sir_probs, SirState};
use crate::sis::{infection_probs, obs_logpmf};
use crate::state::PopulationState;

/// `ln p(x_{0:T}, y_{0:T})` for an SIS path: initial Bernoullis, per-agent
/// transition Bernoullis, and binomially thinned observations.
pub fn path_log_density_sis(
    rates: &AgentRates,
    network: &Network,
    rho: f64,
    states: &[PopulationState],
    y: &[u64],
) -> f64 {
    assert_eq!(states.len(), y.len(), "state and observation paths must align");
    let mut total = 0.0;
    for (agent, &a) in rates.alpha0.iter().enumerate() {
        let p = if states[0].get(agent) { a } else { 1.0 - a };
        total += p.ln();
    }
    for t in 1..states.len() {
        let probs = infection_probs(&states[t - 1], rates, network);
        for (agent, &a) in probs.iter().enumerate() {
            let p = if states[t].get(agent) { a } else { 1.0 - a };
            total += p.ln();
        }
    }
    for (x, &obs) in states.iter().zip(y) {
        total += obs_logpmf(obs, x.count_ones(), rho);
    }
    total
}

/// `ln p(x_{0:T}, y_{0:T})` for an SIR path; recovered agents at time 0
/// carry zero initial mass.
pub fn path_log_density_sir(
    rates: &AgentRates,
    network: &Network,
    rho: f64,
    states: &[SirState],
    y: &[u64],
) -> f64 {
    assert_eq!(states.len(), y.len(), "state and observation paths must align");
    let mut total = 0.0;
    for (agent, &a) in rates.alpha0.iter().enumerate() {
        total += match states[0].agent(agent) {
            crate::sir::INFECTED => a.ln(),
            crate::sir::SUSCEPTIBLE => (1.0 - a).ln(),
            _ => f64::NEG_INFINITY,
        };
    }
    for t in 1..states.len() {
        let probs = sir_probs(&states[t - 1], rates, network);
        for agent in 0..states[t].len() {
            total += probs.probs[agent][states[t].agent(agent) as usize].ln();
        }
    }
    for (x, &obs) in states.iter().zip(y) {
        total += obs_logpmf(obs, x.infected_count(), rho);
    }
    total
}
