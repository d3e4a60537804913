//! Fully adapted auxiliary particle filters.
//!
//! Because the observation density depends on the state only through the
//! infected count, the locally optimal proposal
//! `q(x_t | x_{t-1}, y_t) ∝ f(x_t | x_{t-1}) g(y_t | I(x_t))` factorises:
//! draw the count from a categorical proportional to
//! `PoiBin(i | x_{t-1}) g(y_t | i)`, then draw which agents are infected
//! from the conditioned-Bernoulli law. The incremental weight is the
//! categorical's normaliser `p̂(y_t | x_{t-1})`, known before propagation,
//! so resampling happens first and the surviving weights are uniform.

use std::sync::Arc;

use crate::distributions::{
    condber_logpmf, condber_sample, poibin_table, transpoi_pmf, PmfTable, ProbVector,
};
use crate::error::Result;
use crate::model::{AgentRates, Network};
use crate::numeric::{logsumexp, normalize_log_weights, LogFactorial};
use crate::sir::{reconstruct_next, sir_probs, SirState};
use crate::sis::{infection_probs, obs_log_row};
use crate::state::PopulationState;
use crate::streams::stream_rng;

use super::{
    ess, log_mass_row, multinomial_resample, sample_log_categorical, validate_filter_inputs,
    FilterOutput, ParticleSystem, PmfMode,
};

/// One propagation arm: the per-agent next-step infection probabilities of
/// a parent particle, with the exact count table built eagerly (exact
/// mode) or only on demand for resampled ancestors (surrogate mode).
struct Arm {
    alpha: ProbVector,
    table: Option<Arc<PmfTable>>,
    /// `ln p̂(i) + ln g(y_t | i)`: categorical weights over the count.
    lv: Vec<f64>,
    /// `logsumexp(lv) = ln p̂(y_t | parent)`.
    log_total: f64,
}

impl Arm {
    fn new(alpha: ProbVector, obs_row: &[f64], mode: PmfMode) -> Self {
        let n = alpha.len();
        let (table, mut lv) = match mode {
            PmfMode::Exact => {
                let table = Arc::new(poibin_table(&alpha));
                let lv = table.log_pmf();
                (Some(table), lv)
            }
            PmfMode::TransPoi => (None, log_mass_row(&transpoi_pmf(&alpha), n + 1)),
        };
        for (l, &o) in lv.iter_mut().zip(obs_row) {
            *l += o;
        }
        let log_total = logsumexp(&lv);
        Self { alpha, table, lv, log_total }
    }

    fn ensure_table(&mut self) -> Arc<PmfTable> {
        self.table
            .get_or_insert_with(|| Arc::new(poibin_table(&self.alpha)))
            .clone()
    }

    /// Draws a count and an indicator vector, returning the state mask and
    /// the log proposal density of the pair. In surrogate mode the count
    /// categorical is restricted to the exact table's support so the
    /// conditioned-Bernoulli draw is always feasible.
    fn propagate<R: rand::Rng + ?Sized>(
        &mut self,
        rng: &mut R,
        mode: PmfMode,
    ) -> Result<(PopulationState, f64)> {
        let table = self.ensure_table();
        let (i, lcat) = match mode {
            PmfMode::Exact => {
                let i = sample_log_categorical(rng, &self.lv, self.log_total);
                (i, self.lv[i] - self.log_total)
            }
            PmfMode::TransPoi => {
                let support = table.log_pmf();
                let restricted: Vec<f64> = self
                    .lv
                    .iter()
                    .zip(&support)
                    .map(|(&l, &s)| if s == f64::NEG_INFINITY { f64::NEG_INFINITY } else { l })
                    .collect();
                let total = logsumexp(&restricted);
                let i = sample_log_categorical(rng, &restricted, total);
                (i, restricted[i] - total)
            }
        };
        let mask = condber_sample(rng, &self.alpha, i, &table)?;
        let lcond = condber_logpmf(&mask, &self.alpha, i, &table);
        Ok((mask, lcat + lcond))
    }
}

/// Shared auxiliary-filter loop over both state types. `alpha_of` maps a
/// parent state to the per-agent probability of being infected next step;
/// `assemble` turns the sampled infection indicators into the full state.
fn auxiliary_skeleton<S: Clone>(
    rates: &AgentRates,
    rho: f64,
    y: &[u64],
    particles: usize,
    seed: u64,
    mode: PmfMode,
    tag: &str,
    init_parent: S,
    alpha_of: impl Fn(&S) -> ProbVector,
    assemble: impl Fn(&S, PopulationState) -> S,
    infected: impl Fn(&S) -> usize,
) -> Result<FilterOutput<S>> {
    let n = rates.n();
    validate_filter_inputs(n, y, rho, particles)?;
    let lf = LogFactorial::new(n);
    let mut system = ParticleSystem::new(particles);
    let mut log_likelihood = 0.0;
    let mut normalized = vec![0.0; particles];
    let resample_tag = format!("{tag}/resample");

    for (t, &obs) in y.iter().enumerate() {
        let obs_row = obs_log_row(obs, n, rho, &lf);
        // Build one arm per distinct parent: a single shared arm at t = 0,
        // one per surviving particle afterwards.
        let (mut arms, weights): (Vec<Arm>, Vec<f64>) = if t == 0 {
            let arm = Arm::new(rates.alpha0.clone(), &obs_row, mode);
            let w = vec![arm.log_total; particles];
            (vec![arm], w)
        } else {
            let arms: Vec<Arm> = system.states[t - 1]
                .iter()
                .map(|x| Arm::new(alpha_of(x), &obs_row, mode))
                .collect();
            let w = arms.iter().map(|a| a.log_total).collect();
            (arms, w)
        };

        let total = normalize_log_weights(&weights, &mut normalized);
        let factor = total - (particles as f64).ln();
        system.ess.push(ess(&normalized));
        system.log_step_factors.push(factor);
        system.log_weights.push(weights);
        if total == f64::NEG_INFINITY {
            // No parent gives the observation positive predictive mass.
            system.collapsed = true;
            system.collapse_time = Some(t);
            system.final_log_weights = vec![f64::NEG_INFINITY; particles];
            return Ok(FilterOutput { log_likelihood: f64::NEG_INFINITY, system });
        }
        log_likelihood += factor;

        let ancestors: Vec<usize> = if t == 0 {
            vec![0; particles]
        } else {
            let mut rng = stream_rng(seed, &resample_tag, &[t as u64]);
            let ancestors = multinomial_resample(&mut rng, &normalized, particles);
            system.ancestors.push(ancestors.clone());
            ancestors
        };

        let mut states = Vec::with_capacity(particles);
        let mut proposal = Vec::with_capacity(particles);
        for (p, &a) in ancestors.iter().enumerate() {
            let mut rng = stream_rng(seed, tag, &[t as u64, p as u64]);
            let (mask, lq) = arms[a].propagate(&mut rng, mode)?;
            let x = if t == 0 {
                assemble(&init_parent, mask)
            } else {
                assemble(&system.states[t - 1][a], mask)
            };
            system.record_slack(infected(&x), obs);
            states.push(x);
            proposal.push(lq);
        }
        system.states.push(states);
        system.proposal_log_density.push(proposal);
    }
    // Post-propagation weights are uniform; `new` already set them to 0.
    Ok(FilterOutput { log_likelihood, system })
}

/// Auxiliary particle filter for the SIS model.
pub fn run_apf_sis(
    rates: &AgentRates,
    network: &Network,
    rho: f64,
    y: &[u64],
    particles: usize,
    seed: u64,
    mode: PmfMode,
) -> Result<FilterOutput<PopulationState>> {
    let n = rates.n();
    auxiliary_skeleton(
        rates,
        rho,
        y,
        particles,
        seed,
        mode,
        "apf-sis",
        PopulationState::zeros(n),
        |x| infection_probs(x, rates, network),
        |_, mask| mask,
        PopulationState::count_ones,
    )
}

/// Auxiliary particle filter for the SIR model.
pub fn run_apf_sir(
    rates: &AgentRates,
    network: &Network,
    rho: f64,
    y: &[u64],
    particles: usize,
    seed: u64,
    mode: PmfMode,
) -> Result<FilterOutput<SirState>> {
    let n = rates.n();
    auxiliary_skeleton(
        rates,
        rho,
        y,
        particles,
        seed,
        mode,
        "apf-sir",
        SirState::susceptible(n),
        |x| {
            let probs = sir_probs(x, rates, network);
            ProbVector::new(probs.probs.iter().map(|p| p[1]).collect())
                .expect("transition probabilities are valid")
        },
        |parent, mask| reconstruct_next(parent, &mask),
        SirState::infected_count,
    )
}
