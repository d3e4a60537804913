//! Particle-filter engine: shared particle-system bookkeeping plus the
//! concrete bootstrap, fully-adapted auxiliary, and controlled filters
//! for the SIS and SIR models.
//!
//! Every filter draws from counter-based random streams keyed by
//! `(seed, step, particle)`, so estimates are reproducible and independent
//! of scheduling; resampling is always multinomial.

mod apf;
mod bif;
mod bpf;
mod csmc;

pub use apf::{run_apf_sir, run_apf_sis};
pub use bif::{bif_sir, bif_sis, bif_sis_clustered, BifClustered, BifSir, BifSis};
pub use bpf::{run_bpf_sir, run_bpf_sis};
pub use csmc::{run_csmc_sir, run_csmc_sis, SisTwist};

use rand::distributions::WeightedIndex;
use rand::prelude::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::normalize_log_weights;

/// Whether Poisson-Binomial factors are evaluated exactly (quadratic
/// table) or through the translated-Poisson surrogate (linear).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PmfMode {
    Exact,
    #[serde(rename = "transpoi")]
    TransPoi,
}

/// Full record of one particle-filter run.
///
/// Index conventions: `states[t][p]` is particle `p` after the step at
/// time `t`; `ancestors[t-1][p]` is the index of its time-`t-1` ancestor;
/// `log_weights[t]` are the unnormalized weights the step-`t` likelihood
/// factor and the next resampling use (for the auxiliary filter these are
/// indexed by the time-`t-1` population that generated them);
/// `proposal_log_density[t][p]` is the log proposal mass of the draw that
/// produced `states[t][p]`.
#[derive(Clone, Debug)]
pub struct ParticleSystem<S> {
    pub states: Vec<Vec<S>>,
    pub ancestors: Vec<Vec<usize>>,
    pub log_weights: Vec<Vec<f64>>,
    pub proposal_log_density: Vec<Vec<f64>>,
    /// Weights of the surviving paths at the end of the run, used by
    /// [`trace_ancestry`]; uniform for the fully-adapted filters.
    pub final_log_weights: Vec<f64>,
    /// Effective sample size of each step's normalized weights.
    pub ess: Vec<f64>,
    /// Per-step contributions to the log likelihood estimate.
    pub log_step_factors: Vec<f64>,
    pub collapsed: bool,
    pub collapse_time: Option<usize>,
    /// Minimum of `I(X_t) - y_t` over all particles and steps.
    pub min_slack: i64,
}

impl<S> ParticleSystem<S> {
    pub(crate) fn new(particles: usize) -> Self {
        Self {
            states: Vec::new(),
            ancestors: Vec::new(),
            log_weights: Vec::new(),
            proposal_log_density: Vec::new(),
            final_log_weights: vec![0.0; particles],
            ess: Vec::new(),
            log_step_factors: Vec::new(),
            collapsed: false,
            collapse_time: None,
            min_slack: i64::MAX,
        }
    }

    pub fn particles(&self) -> usize {
        self.states.first().map_or(0, Vec::len)
    }

    pub(crate) fn record_slack(&mut self, infected: usize, obs: u64) {
        let slack = infected as i64 - obs as i64;
        if slack < self.min_slack {
            self.min_slack = slack;
        }
    }
}

/// A particle filter's likelihood estimate together with the full run
/// record.
#[derive(Clone, Debug)]
pub struct FilterOutput<S> {
    pub log_likelihood: f64,
    pub system: ParticleSystem<S>,
}

/// Effective sample size `1/Σ W²` of normalized weights; `0` signals a
/// fully collapsed population.
pub fn ess(normalized_weights: &[f64]) -> f64 {
    let sum_sq: f64 = normalized_weights.iter().map(|&w| w * w).sum();
    if sum_sq <= 0.0 {
        0.0
    } else {
        1.0 / sum_sq
    }
}

/// `count` iid categorical draws from normalized weights.
pub fn multinomial_resample<R: Rng + ?Sized>(
    rng: &mut R,
    normalized_weights: &[f64],
    count: usize,
) -> Vec<usize> {
    let dist = WeightedIndex::new(normalized_weights)
        .expect("resampling requires nonzero total weight");
    (0..count).map(|_| dist.sample(rng)).collect()
}

/// Reconstructs the `P` surviving trajectories by following ancestor
/// indices backwards, paired with their normalized final weights: the
/// empirical smoothing measure of the run.
pub fn trace_ancestry<S: Clone>(system: &ParticleSystem<S>) -> Vec<(Vec<S>, f64)> {
    let steps = system.states.len();
    assert!(steps > 0, "cannot trace an empty run");
    assert_eq!(system.ancestors.len(), steps - 1);
    let particles = system.particles();
    let mut weights = vec![0.0; particles];
    normalize_log_weights(&system.final_log_weights, &mut weights);
    (0..particles)
        .map(|p| {
            let mut path = Vec::with_capacity(steps);
            let mut b = p;
            path.push(system.states[steps - 1][b].clone());
            for t in (0..steps - 1).rev() {
                b = system.ancestors[t][b];
                path.push(system.states[t][b].clone());
            }
            path.reverse();
            (path, weights[p])
        })
        .collect()
}

/// Log masses of a pmf read off on `0..len`, with exact zeros mapped to
/// `NEG_INFINITY`; the pmf's own offset is respected.
pub(crate) fn log_mass_row(pmf: &crate::distributions::DiscretePmf, len: usize) -> Vec<f64> {
    (0..len as i64)
        .map(|i| {
            let m = pmf.mass(i);
            if m > 0.0 {
                m.ln()
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect()
}

/// One categorical draw from unnormalized log masses with a precomputed
/// log normalizer, using a single uniform variate.
pub(crate) fn sample_log_categorical<R: Rng + ?Sized>(
    rng: &mut R,
    log_masses: &[f64],
    log_total: f64,
) -> usize {
    debug_assert!(log_total.is_finite());
    let u = rng.gen::<f64>();
    let mut cum = 0.0;
    let mut last_positive = 0;
    for (ix, &lm) in log_masses.iter().enumerate() {
        if lm == f64::NEG_INFINITY {
            continue;
        }
        cum += (lm - log_total).exp();
        last_positive = ix;
        if u < cum {
            return ix;
        }
    }
    last_positive
}

pub(crate) fn validate_filter_inputs(
    n: usize,
    y: &[u64],
    rho: f64,
    particles: usize,
) -> Result<()> {
    if particles == 0 {
        return Err(Error::InvalidArgument("particle count must be positive".into()));
    }
    if y.is_empty() {
        return Err(Error::InvalidArgument("empty observation sequence".into()));
    }
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::InvalidProbability(rho));
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::streams::stream_rng;

    #[test]
    fn ess_reference_values() {
        assert!((ess(&[0.25; 4]) - 4.0).abs() < 1e-12);
        assert!((ess(&[0.0, 1.0, 0.0]) - 1.0).abs() < 1e-12);
        assert!((ess(&[0.5, 0.25, 0.25]) - 8.0 / 3.0).abs() < 1e-12);
        assert_eq!(ess(&[0.0, 0.0]), 0.0);
    }

    #[test]
    fn one_hot_resampling_is_degenerate() {
        let mut rng = stream_rng(3, "resample-test", &[]);
        let picks = multinomial_resample(&mut rng, &[0.0, 0.0, 1.0, 0.0], 64);
        assert!(picks.iter().all(|&a| a == 2));
    }

    #[test]
    fn resampling_offspring_counts_match_multinomial_moments() {
        let weights = [0.5, 0.3, 0.2];
        let (p, reps) = (10usize, 20_000usize);
        let mut totals = [0usize; 3];
        for r in 0..reps {
            let mut rng = stream_rng(11, "resample-moments", &[r as u64]);
            for a in multinomial_resample(&mut rng, &weights, p) {
                totals[a] += 1;
            }
        }
        let draws = (p * reps) as f64;
        for (k, &w) in weights.iter().enumerate() {
            let freq = totals[k] as f64 / draws;
            let se = (w * (1.0 - w) / draws).sqrt();
            assert!(
                (freq - w).abs() < 3.0 * se + 1e-9,
                "component {k}: freq {freq} vs {w}"
            );
        }
    }

    #[test]
    fn log_categorical_matches_probabilities() {
        let lm = [f64::NEG_INFINITY, (0.3f64).ln(), (0.7f64).ln()];
        let total = 0.0;
        let mut rng = stream_rng(17, "logcat", &[]);
        let mut counts = [0usize; 3];
        let draws = 200_000;
        for _ in 0..draws {
            counts[sample_log_categorical(&mut rng, &lm, total)] += 1;
        }
        assert_eq!(counts[0], 0);
        assert!((counts[1] as f64 / draws as f64 - 0.3).abs() < 0.01);
        assert!((counts[2] as f64 / draws as f64 - 0.7).abs() < 0.01);
    }

    #[test]
    fn ancestry_tracing_follows_indices() {
        // Hand-built system: 3 particles, 3 steps, known lineage.
        let mut system: ParticleSystem<u32> = ParticleSystem::new(3);
        system.states = vec![vec![10, 11, 12], vec![20, 21, 22], vec![30, 31, 32]];
        system.ancestors = vec![vec![2, 0, 1], vec![1, 2, 0]];
        system.final_log_weights = vec![0.0, f64::NEG_INFINITY, 0.0];
        let paths = trace_ancestry(&system);
        assert_eq!(paths[0].0, vec![10, 21, 30]);
        assert_eq!(paths[1].0, vec![11, 22, 31]);
        assert_eq!(paths[2].0, vec![12, 20, 32]);
        assert!((paths[0].1 - 0.5).abs() < 1e-12);
        assert!((paths[1].1 - 0.0).abs() < 1e-12);
    }
}
