//! Controlled sequential Monte Carlo: particle filters whose proposals are
//! twisted by the backward information tables of [`super::bif`].
//!
//! The twisted transition factorises the same way as the locally optimal
//! auxiliary proposal — a categorical over the count summary followed by a
//! conditioned-Bernoulli draw of which agents realise it — except the
//! categorical now weights each summary by the table's estimate of the
//! probability of *all* remaining observations, not just the next one.
//! Each particle therefore carries a cache holding its count tables and
//! its contraction against the next ψ slice; the cache is consulted twice
//! (once for the particle's own weight, once when it is resampled as an
//! ancestor) and then dropped.

use std::sync::Arc;

use crate::distributions::{
    condber_logpmf, condber_sample, poibin_table, transpoi_pmf, PmfTable, ProbVector,
};
use crate::error::{Error, Result};
use crate::model::{AgentRates, Network};
use crate::numeric::{logsumexp, normalize_log_weights, LogFactorial};
use crate::sir::{reconstruct_next, sir_probs, sir_summary_transition_exact, SirState};
use crate::sis::{infection_probs, obs_log_row};
use crate::state::PopulationState;
use crate::streams::stream_rng;

use super::bif::{BifClustered, BifSir, BifSis};
use super::{
    ess, log_mass_row, multinomial_resample, sample_log_categorical, validate_filter_inputs,
    FilterOutput, ParticleSystem, PmfMode,
};

/// Twisting table for the SIS filter: over the total infected count, or
/// over a tuple of per-cluster counts for the refined variant.
#[derive(Clone, Debug)]
pub enum SisTwist {
    Count(BifSis),
    Clustered(BifClustered),
}

impl SisTwist {
    fn steps(&self) -> usize {
        match self {
            SisTwist::Count(b) => b.steps(),
            SisTwist::Clustered(b) => b.steps(),
        }
    }

    fn n(&self) -> usize {
        match self {
            SisTwist::Count(b) => b.n(),
            SisTwist::Clustered(b) => b.n(),
        }
    }

    fn slice(&self, t: usize) -> &[f64] {
        match self {
            SisTwist::Count(b) => b.slice(t),
            SisTwist::Clustered(b) => b.slice(t),
        }
    }
}

/// Agent partition matching a twist's cell layout: cluster `k` occupies
/// `members[k]` and contributes `tuple[k] · strides[k]` to the flat index.
struct Partition {
    members: Vec<Vec<usize>>,
    dims: Vec<usize>,
    cells: usize,
}

impl Partition {
    fn from_twist(twist: &SisTwist, rates: &AgentRates) -> Result<Self> {
        match twist {
            SisTwist::Count(_) => {
                let n = rates.n();
                Ok(Self {
                    members: vec![(0..n).collect()],
                    dims: vec![n + 1],
                    cells: n + 1,
                })
            }
            SisTwist::Clustered(b) => {
                let clusters = rates.clusters.as_ref().ok_or_else(|| {
                    Error::InvalidModel(
                        "clustered twist requires rates with a cluster partition".into(),
                    )
                })?;
                if clusters.sizes.len() != b.clusters()
                    || clusters
                        .sizes
                        .iter()
                        .zip(b.dims())
                        .any(|(&s, &d)| s + 1 != d)
                {
                    return Err(Error::DimensionMismatch(
                        "cluster partition does not match the twist's cell layout".into(),
                    ));
                }
                let dims = b.dims().to_vec();
                let cells = dims.iter().product();
                Ok(Self { members: clusters.members.clone(), dims, cells })
            }
        }
    }

    fn unflatten(&self, mut flat: usize, tuple: &mut [usize]) {
        for (k, &d) in self.dims.iter().enumerate() {
            tuple[k] = flat % d;
            flat /= d;
        }
    }

    /// Restriction of a full per-agent probability vector to each cluster.
    fn split(&self, alpha: &[f64]) -> Vec<ProbVector> {
        self.members
            .iter()
            .map(|m| {
                ProbVector::new(m.iter().map(|&agent| alpha[agent]).collect())
                    .expect("restriction of a valid probability vector")
            })
            .collect()
    }
}

/// Per-particle propagation cache for the SIS filter: the count laws of
/// the particle's offspring per cluster and their contraction with the
/// next ψ slice.
struct SisCache {
    alphas: Vec<ProbVector>,
    tables: Vec<Option<Arc<PmfTable>>>,
    /// `row[cell] = Σ_k ln p̂_k(i_k) + ln ψ_next(cell)`.
    row: Vec<f64>,
    /// `logsumexp(row)`: the twisted normaliser `E_next` of this particle.
    log_total: f64,
}

fn build_sis_cache(
    alphas: Vec<ProbVector>,
    psi_next: &[f64],
    part: &Partition,
    mode: PmfMode,
) -> SisCache {
    let k = part.members.len();
    let mut tables: Vec<Option<Arc<PmfTable>>> = vec![None; k];
    let mut lpbs: Vec<Vec<f64>> = Vec::with_capacity(k);
    for (c, alpha) in alphas.iter().enumerate() {
        match mode {
            PmfMode::Exact => {
                let table = Arc::new(poibin_table(alpha));
                lpbs.push(table.log_pmf());
                tables[c] = Some(table);
            }
            PmfMode::TransPoi => {
                lpbs.push(log_mass_row(&transpoi_pmf(alpha), part.dims[c]));
            }
        }
    }
    let mut row = vec![f64::NEG_INFINITY; part.cells];
    let mut tuple = vec![0usize; k];
    for (cell, slot) in row.iter_mut().enumerate() {
        let psi = psi_next[cell];
        if psi == f64::NEG_INFINITY {
            continue;
        }
        part.unflatten(cell, &mut tuple);
        let mut value = psi;
        for c in 0..k {
            value += lpbs[c][tuple[c]];
        }
        *slot = value;
    }
    let log_total = logsumexp(&row);
    SisCache { alphas, tables, row, log_total }
}

impl SisCache {
    fn ensure_tables(&mut self) {
        for (c, table) in self.tables.iter_mut().enumerate() {
            if table.is_none() {
                *table = Some(Arc::new(poibin_table(&self.alphas[c])));
            }
        }
    }

    /// Draws a cell and the infected agents realising it. Returns the flat
    /// cell, the indicator mask, the log proposal density, and the total
    /// count. Tables must have been ensured beforehand.
    fn propagate<R: rand::Rng + ?Sized>(
        &self,
        rng: &mut R,
        part: &Partition,
        mode: PmfMode,
        n: usize,
    ) -> Result<(usize, PopulationState, f64, usize)> {
        let (cell, lcat) = match mode {
            PmfMode::Exact => {
                let cell = sample_log_categorical(rng, &self.row, self.log_total);
                (cell, self.row[cell] - self.log_total)
            }
            PmfMode::TransPoi => {
                // Restrict to cells every cluster's exact table can realise
                // so the conditioned-Bernoulli draw below never fails.
                let supports: Vec<Vec<f64>> = self
                    .tables
                    .iter()
                    .map(|t| t.as_ref().expect("tables ensured").log_pmf())
                    .collect();
                let mut tuple = vec![0usize; part.members.len()];
                let restricted: Vec<f64> = self
                    .row
                    .iter()
                    .enumerate()
                    .map(|(cell, &v)| {
                        part.unflatten(cell, &mut tuple);
                        let feasible = supports
                            .iter()
                            .zip(&tuple)
                            .all(|(s, &i)| s[i] > f64::NEG_INFINITY);
                        if feasible {
                            v
                        } else {
                            f64::NEG_INFINITY
                        }
                    })
                    .collect();
                let total = logsumexp(&restricted);
                let cell = sample_log_categorical(rng, &restricted, total);
                (cell, restricted[cell] - total)
            }
        };
        let mut tuple = vec![0usize; part.members.len()];
        part.unflatten(cell, &mut tuple);
        let mut mask = PopulationState::zeros(n);
        let mut lq = lcat;
        for (c, &count) in tuple.iter().enumerate() {
            let table = self.tables[c].as_ref().expect("tables ensured");
            let sub = condber_sample(rng, &self.alphas[c], count, table)?;
            lq += condber_logpmf(&sub, &self.alphas[c], count, table);
            for (j, &agent) in part.members[c].iter().enumerate() {
                if sub.get(j) {
                    mask.set(agent, true);
                }
            }
        }
        Ok((cell, mask, lq, tuple.iter().sum()))
    }
}

/// Controlled SMC for the SIS model, twisted by a count or clustered-count
/// backward information table.
pub fn run_csmc_sis(
    rates: &AgentRates,
    network: &Network,
    rho: f64,
    y: &[u64],
    twist: &SisTwist,
    particles: usize,
    seed: u64,
    mode: PmfMode,
) -> Result<FilterOutput<PopulationState>> {
    let n = rates.n();
    validate_filter_inputs(n, y, rho, particles)?;
    if twist.n() != n {
        return Err(Error::DimensionMismatch("twist population size != N".into()));
    }
    if twist.steps() != y.len() {
        return Err(Error::DimensionMismatch(
            "twist horizon does not match the observation sequence".into(),
        ));
    }
    let part = Partition::from_twist(twist, rates)?;
    let lf = LogFactorial::new(n);
    let horizon = y.len() - 1;
    let tag = "csmc-sis";
    let resample_tag = format!("{tag}/resample");

    let mut system = ParticleSystem::new(particles);
    let mut log_likelihood = 0.0;
    let mut normalized = vec![0.0; particles];

    // Shared t = 0 cache: every particle proposes from the twisted initial
    // measure, whose normaliser is the first estimator factor.
    let mut init_cache = build_sis_cache(part.split(&rates.alpha0), twist.slice(0), &part, mode);
    if init_cache.log_total == f64::NEG_INFINITY {
        return Err(Error::Infeasible(
            "the twisted initial measure has no mass; the observations are \
             unreachable under the twist"
                .into(),
        ));
    }
    let log_mu_psi = init_cache.log_total;
    init_cache.ensure_tables();

    let mut caches: Vec<SisCache> = Vec::new();
    for (t, &obs) in y.iter().enumerate() {
        let obs_row = obs_log_row(obs, n, rho, &lf);
        let psi_t = twist.slice(t);
        let ancestors: Vec<usize> = if t == 0 {
            vec![0; particles]
        } else {
            let mut rng = stream_rng(seed, &resample_tag, &[t as u64]);
            let drawn = multinomial_resample(&mut rng, &normalized, particles);
            for &a in &drawn {
                caches[a].ensure_tables();
            }
            system.ancestors.push(drawn.clone());
            drawn
        };

        let mut states = Vec::with_capacity(particles);
        let mut proposal = Vec::with_capacity(particles);
        let mut cells = Vec::with_capacity(particles);
        for (p, &a) in ancestors.iter().enumerate() {
            let cache = if t == 0 { &init_cache } else { &caches[a] };
            let mut rng = stream_rng(seed, tag, &[t as u64, p as u64]);
            let (cell, mask, lq, total) = cache.propagate(&mut rng, &part, mode, n)?;
            system.record_slack(total, obs);
            states.push(mask);
            proposal.push(lq);
            cells.push((cell, total));
        }

        // Next-step caches deliver each particle's twisted normaliser,
        // which enters its own weight now and its offspring's proposals
        // at the next step.
        let next_caches: Vec<SisCache> = if t < horizon {
            let psi_next = twist.slice(t + 1);
            states
                .iter()
                .map(|x| {
                    let alpha = infection_probs(x, rates, network);
                    build_sis_cache(part.split(&alpha), psi_next, &part, mode)
                })
                .collect()
        } else {
            Vec::new()
        };

        let log_weights: Vec<f64> = (0..particles)
            .map(|p| {
                let (cell, total) = cells[p];
                let e_next =
                    if t < horizon { next_caches[p].log_total } else { 0.0 };
                let base = obs_row[total] - psi_t[cell] + e_next;
                if t == 0 {
                    base + log_mu_psi
                } else {
                    base
                }
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
        caches = next_caches;
    }
    Ok(FilterOutput { log_likelihood, system })
}

/// Per-particle propagation cache for the SIR filter: the law of the
/// next infection-indicator count and its contraction with the next ψ
/// slice through the exact `(s, i)` summary transition.
struct SirCache {
    alpha: ProbVector,
    table: Arc<PmfTable>,
    /// Log pmf of the next infected count.
    lpb: Vec<f64>,
    /// `lv[i] = ln Σ_s p̂(s, i) ψ_next(s, i)`, the count proposal weights.
    lv: Vec<f64>,
    log_total: f64,
}

fn build_sir_cache(
    x: &SirState,
    rates: &AgentRates,
    network: &Network,
    bif: &BifSir,
    next_t: usize,
    horizon: usize,
) -> SirCache {
    let n = x.len();
    let probs = sir_probs(x, rates, network);
    let alpha = ProbVector::new(probs.probs.iter().map(|p| p[1]).collect())
        .expect("transition probabilities are valid");
    let table = Arc::new(poibin_table(&alpha));
    let lpb = table.log_pmf();
    let mut lv = vec![f64::NEG_INFINITY; n + 1];
    if next_t == horizon {
        // The terminal slice depends on the infected count alone.
        for (i, slot) in lv.iter_mut().enumerate() {
            let psi = bif.log_psi_terminal(i);
            if psi > f64::NEG_INFINITY && lpb[i] > f64::NEG_INFINITY {
                *slot = lpb[i] + psi;
            }
        }
    } else {
        let law = sir_summary_transition_exact(x, rates, network);
        let mut terms = Vec::with_capacity(n + 1);
        for (i, slot) in lv.iter_mut().enumerate() {
            if lpb[i] == f64::NEG_INFINITY {
                continue;
            }
            terms.clear();
            for s in 0..=(n - i) {
                let m = law.mass(s, i);
                if m == 0.0 {
                    continue;
                }
                let psi = bif.log_psi(next_t, s, i);
                if psi > f64::NEG_INFINITY {
                    terms.push(m.ln() + psi);
                }
            }
            *slot = logsumexp(&terms);
        }
    }
    let log_total = logsumexp(&lv);
    SirCache { alpha, table, lpb, lv, log_total }
}

/// Controlled SMC for the SIR model, twisted by the `(s, i)` backward
/// information table. Exact count laws only: the quadratic table is needed
/// for the conditioned-Bernoulli draw regardless, so a surrogate saves
/// nothing here.
pub fn run_csmc_sir(
    rates: &AgentRates,
    network: &Network,
    rho: f64,
    y: &[u64],
    bif: &BifSir,
    particles: usize,
    seed: u64,
) -> Result<FilterOutput<SirState>> {
    let n = rates.n();
    validate_filter_inputs(n, y, rho, particles)?;
    if bif.n() != n {
        return Err(Error::DimensionMismatch("twist population size != N".into()));
    }
    if bif.steps() != y.len() {
        return Err(Error::DimensionMismatch(
            "twist horizon does not match the observation sequence".into(),
        ));
    }
    let lf = LogFactorial::new(n);
    let horizon = y.len() - 1;
    let tag = "csmc-sir";
    let resample_tag = format!("{tag}/resample");

    let mut system = ParticleSystem::new(particles);
    let mut log_likelihood = 0.0;
    let mut normalized = vec![0.0; particles];

    // t = 0: everyone is susceptible beforehand, so s₀ = N - i₀ and the
    // initial ψ can be read on the count diagonal.
    let init_cache = {
        let table = Arc::new(poibin_table(&rates.alpha0));
        let lpb = table.log_pmf();
        let mut lv = vec![f64::NEG_INFINITY; n + 1];
        for (i, slot) in lv.iter_mut().enumerate() {
            let psi = bif.log_psi(0, n - i, i);
            if psi > f64::NEG_INFINITY && lpb[i] > f64::NEG_INFINITY {
                *slot = lpb[i] + psi;
            }
        }
        let log_total = logsumexp(&lv);
        SirCache { alpha: rates.alpha0.clone(), table, lpb, lv, log_total }
    };
    if init_cache.log_total == f64::NEG_INFINITY {
        return Err(Error::Infeasible(
            "the twisted initial measure has no mass; the observations are \
             unreachable under the twist"
                .into(),
        ));
    }
    let log_mu_psi = init_cache.log_total;
    let all_susceptible = SirState::susceptible(n);

    let mut caches: Vec<SirCache> = Vec::new();
    for (t, &obs) in y.iter().enumerate() {
        let obs_row = obs_log_row(obs, n, rho, &lf);
        let ancestors: Vec<usize> = if t == 0 {
            vec![0; particles]
        } else {
            let mut rng = stream_rng(seed, &resample_tag, &[t as u64]);
            let drawn = multinomial_resample(&mut rng, &normalized, particles);
            system.ancestors.push(drawn.clone());
            drawn
        };

        let mut states = Vec::with_capacity(particles);
        let mut proposal = Vec::with_capacity(particles);
        let mut counts = Vec::with_capacity(particles);
        for (p, &a) in ancestors.iter().enumerate() {
            let cache = if t == 0 { &init_cache } else { &caches[a] };
            let parent =
                if t == 0 { &all_susceptible } else { &system.states[t - 1][a] };
            let mut rng = stream_rng(seed, tag, &[t as u64, p as u64]);
            let i = sample_log_categorical(&mut rng, &cache.lv, cache.log_total);
            let mask = condber_sample(&mut rng, &cache.alpha, i, &cache.table)?;
            let lq = (cache.lv[i] - cache.log_total)
                + condber_logpmf(&mask, &cache.alpha, i, &cache.table);
            let x = reconstruct_next(parent, &mask);
            system.record_slack(i, obs);
            states.push(x);
            proposal.push(lq);
            counts.push((a, i));
        }

        let next_caches: Vec<SirCache> = if t < horizon {
            states
                .iter()
                .map(|x| build_sir_cache(x, rates, network, bif, t + 1, horizon))
                .collect()
        } else {
            Vec::new()
        };

        let log_weights: Vec<f64> = (0..particles)
            .map(|p| {
                let (a, i) = counts[p];
                let cache = if t == 0 { &init_cache } else { &caches[a] };
                let e_next =
                    if t < horizon { next_caches[p].log_total } else { 0.0 };
                let base = obs_row[i] + e_next + cache.lpb[i] - cache.lv[i];
                if t == 0 {
                    base + log_mu_psi
                } else {
                    base
                }
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
        caches = next_caches;
    }
    Ok(FilterOutput { log_likelihood, system })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{forward_filter_sir, forward_filter_sis, trajectory_posterior_sis};
    use crate::smc::{bif_sir, bif_sis, bif_sis_clustered, run_bpf_sis, trace_ancestry};
    use rand::Rng;

    fn random_rates(n: usize, seed: u64) -> AgentRates {
        let mut rng = stream_rng(seed, "csmc-test-rates", &[]);
        let draw = |rng: &mut rand_chacha::ChaCha8Rng| {
            (0..n).map(|_| rng.gen_range(0.15..0.85)).collect::<Vec<f64>>()
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

    fn count_twist(y: &[u64], rates: &AgentRates, rho: f64) -> SisTwist {
        SisTwist::Count(bif_sis(y, rates, rho, PmfMode::Exact).unwrap())
    }

    #[test]
    fn single_observation_estimate_is_exact_with_zero_variance() {
        // With one observation the twist equals the observation density,
        // so the twisted initial normaliser *is* the likelihood.
        let rates = random_rates(7, 1);
        let net = Network::complete(7).unwrap();
        let y = vec![3u64];
        let exact = forward_filter_sis(&rates, &net, 0.7, &y).unwrap().log_likelihood;
        let twist = count_twist(&y, &rates, 0.7);
        for seed in 0..5 {
            let out =
                run_csmc_sis(&rates, &net, 0.7, &y, &twist, 8, seed, PmfMode::Exact)
                    .unwrap();
            assert!((out.log_likelihood - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn final_step_weights_vanish_identically() {
        let rates = random_rates(6, 3);
        let net = Network::complete(6).unwrap();
        let y = vec![2, 3, 1];
        let twist = count_twist(&y, &rates, 0.8);
        let out =
            run_csmc_sis(&rates, &net, 0.8, &y, &twist, 32, 7, PmfMode::Exact).unwrap();
        for &w in out.system.log_weights.last().unwrap() {
            assert_eq!(w, 0.0);
        }
        let bif = bif_sir(&y, &rates, 0.8).unwrap();
        let out = run_csmc_sir(&rates, &net, 0.8, &y, &bif, 32, 7).unwrap();
        for &w in out.system.log_weights.last().unwrap() {
            assert_eq!(w, 0.0);
        }
    }

    #[test]
    fn count_twist_is_unbiased_for_sis_smoke() {
        let rates = random_rates(4, 5);
        let net = Network::complete(4).unwrap();
        let y = vec![1, 2, 1];
        let exact = forward_filter_sis(&rates, &net, 0.8, &y).unwrap().log_likelihood;
        let twist = count_twist(&y, &rates, 0.8);
        let reps = 2000;
        let mut values = Vec::with_capacity(reps);
        for rep in 0..reps {
            let out = run_csmc_sis(
                &rates,
                &net,
                0.8,
                &y,
                &twist,
                16,
                90_000 + rep as u64,
                PmfMode::Exact,
            )
            .unwrap();
            values.push((out.log_likelihood - exact).exp());
        }
        let mean = values.iter().sum::<f64>() / reps as f64;
        let sd = (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
            / (reps - 1) as f64)
            .sqrt();
        let se = sd / (reps as f64).sqrt();
        assert!((mean - 1.0).abs() < 3.0 * se, "ratio mean {mean}, se {se}");
    }

    #[test]
    fn clustered_twist_is_unbiased_for_sis_smoke() {
        let rates = random_rates(5, 7).with_clusters(vec![0, 1, 0, 1, 0]).unwrap();
        let net = Network::complete(5).unwrap();
        let y = vec![2, 1, 3];
        let exact = forward_filter_sis(&rates, &net, 0.8, &y).unwrap().log_likelihood;
        let twist = SisTwist::Clustered(
            bif_sis_clustered(&y, &rates, 0.8, PmfMode::Exact).unwrap(),
        );
        let reps = 1500;
        let mut values = Vec::with_capacity(reps);
        for rep in 0..reps {
            let out = run_csmc_sis(
                &rates,
                &net,
                0.8,
                &y,
                &twist,
                16,
                120_000 + rep as u64,
                PmfMode::Exact,
            )
            .unwrap();
            values.push((out.log_likelihood - exact).exp());
        }
        let mean = values.iter().sum::<f64>() / reps as f64;
        let sd = (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
            / (reps - 1) as f64)
            .sqrt();
        let se = sd / (reps as f64).sqrt();
        assert!((mean - 1.0).abs() < 3.0 * se, "ratio mean {mean}, se {se}");
    }

    #[test]
    fn sir_twist_is_unbiased_smoke() {
        let rates = random_rates(4, 9);
        let net = Network::complete(4).unwrap();
        let y = vec![1, 2, 0];
        let exact = forward_filter_sir(&rates, &net, 0.8, &y).unwrap().log_likelihood;
        let bif = bif_sir(&y, &rates, 0.8).unwrap();
        let reps = 2000;
        let mut values = Vec::with_capacity(reps);
        for rep in 0..reps {
            let out =
                run_csmc_sir(&rates, &net, 0.8, &y, &bif, 16, 150_000 + rep as u64)
                    .unwrap();
            values.push((out.log_likelihood - exact).exp());
        }
        let mean = values.iter().sum::<f64>() / reps as f64;
        let sd = (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
            / (reps - 1) as f64)
            .sqrt();
        let se = sd / (reps as f64).sqrt();
        assert!((mean - 1.0).abs() < 3.0 * se, "ratio mean {mean}, se {se}");
    }

    #[test]
    fn variance_improves_on_bootstrap() {
        // Compare on the likelihood scale, where occasional bootstrap
        // collapses contribute zeros instead of infinities.
        let rates = random_rates(6, 11);
        let net = Network::complete(6).unwrap();
        let y = vec![2, 3, 1, 4, 2];
        let exact = forward_filter_sis(&rates, &net, 0.8, &y).unwrap().log_likelihood;
        let twist = count_twist(&y, &rates, 0.8);
        let reps = 400;
        let spread = |values: &[f64]| {
            let m = values.iter().sum::<f64>() / values.len() as f64;
            values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64
        };
        let csmc: Vec<f64> = (0..reps)
            .map(|r| {
                (run_csmc_sis(&rates, &net, 0.8, &y, &twist, 32, 2_000 + r, PmfMode::Exact)
                    .unwrap()
                    .log_likelihood
                    - exact)
                    .exp()
            })
            .collect();
        let bpf: Vec<f64> = (0..reps)
            .map(|r| {
                (run_bpf_sis(&rates, &net, 0.8, &y, 32, 2_000 + r).unwrap().log_likelihood
                    - exact)
                    .exp()
            })
            .collect();
        assert!(
            spread(&csmc) < spread(&bpf),
            "csmc var {} not below bpf var {}",
            spread(&csmc),
            spread(&bpf)
        );
    }

    #[test]
    fn proposals_cover_the_observations_and_ess_stays_high() {
        let rates = random_rates(8, 13);
        let net = Network::complete(8).unwrap();
        let y = vec![3, 4, 2, 5, 1];
        let twist = count_twist(&y, &rates, 0.6);
        let out =
            run_csmc_sis(&rates, &net, 0.6, &y, &twist, 64, 3, PmfMode::Exact).unwrap();
        assert!(out.system.min_slack >= 0);
        for &e in &out.system.ess {
            assert!(e > 0.2 * 64.0, "ess {e} unexpectedly low for a twisted run");
        }
        let bif = bif_sir(&y[..3], &rates, 0.6).unwrap();
        let out = run_csmc_sir(&rates, &net, 0.6, &y[..3], &bif, 64, 3).unwrap();
        assert!(out.system.min_slack >= 0);
    }

    #[test]
    fn smoothing_matches_the_exact_trajectory_posterior() {
        // The weighted ancestral paths of a twisted run approximate the
        // joint smoothing law; compare in total variation against full
        // enumeration.
        let rates = random_rates(4, 15);
        let net = Network::complete(4).unwrap();
        let y = vec![1, 2, 1];
        let exact = trajectory_posterior_sis(&rates, &net, 0.8, &y).unwrap();
        let twist = count_twist(&y, &rates, 0.8);
        // Resampling degeneracy limits a single run's path diversity, so
        // pool the ancestral measures of independent runs.
        let mut empirical: std::collections::HashMap<Vec<u32>, f64> =
            std::collections::HashMap::new();
        let runs = 4;
        for seed in 0..runs {
            let out =
                run_csmc_sis(&rates, &net, 0.8, &y, &twist, 100_000, seed, PmfMode::Exact)
                    .unwrap();
            for (path, weight) in trace_ancestry(&out.system) {
                let key: Vec<u32> = path
                    .iter()
                    .map(|x| x.ones().map(|agent| 1u32 << agent).sum())
                    .collect();
                *empirical.entry(key).or_insert(0.0) += weight / runs as f64;
            }
        }
        let mut tv = 0.0;
        for (key, &p) in &exact {
            tv += (p - empirical.get(key).copied().unwrap_or(0.0)).abs();
        }
        for (key, &q) in &empirical {
            if !exact.contains_key(key) {
                tv += q;
            }
        }
        tv *= 0.5;
        assert!(tv < 0.02, "trajectory TV {tv}");
    }

    #[test]
    fn telescoping_holds_for_a_single_particle() {
        // With P = 1 the product of incremental weights must equal the
        // exact path-density ratio between target and proposal.
        let rates = random_rates(5, 17);
        let net = Network::complete(5).unwrap();
        let y = vec![2, 1, 3, 0, 2];
        let twist = count_twist(&y, &rates, 0.75);
        let out = run_csmc_sis(&rates, &net, 0.75, &y, &twist, 1, 33, PmfMode::Exact)
            .unwrap();
        let path: Vec<PopulationState> =
            out.system.states.iter().map(|row| row[0].clone()).collect();
        let target = crate::checks::path_log_density_sis(&rates, &net, 0.75, &path, &y);
        let proposal: f64 = out.system.proposal_log_density.iter().map(|row| row[0]).sum();
        let weights: f64 = out.system.log_weights.iter().map(|row| row[0]).sum();
        assert!(
            (weights - (target - proposal)).abs() < 1e-8,
            "telescoping residual {}",
            (weights - (target - proposal)).abs()
        );
    }

    #[test]
    fn surrogate_mode_runs_and_stays_close() {
        let rates = random_rates(10, 19);
        let net = Network::complete(10).unwrap();
        let y = vec![2, 4, 3, 1];
        let exact = forward_filter_sis(&rates, &net, 0.8, &y).unwrap().log_likelihood;
        let twist =
            SisTwist::Count(bif_sis(&y, &rates, 0.8, PmfMode::TransPoi).unwrap());
        let reps = 200;
        let mut sum = 0.0;
        for rep in 0..reps {
            let out = run_csmc_sis(
                &rates,
                &net,
                0.8,
                &y,
                &twist,
                64,
                70_000 + rep as u64,
                PmfMode::TransPoi,
            )
            .unwrap();
            sum += out.log_likelihood;
        }
        assert!((sum / reps as f64 - exact).abs() < 0.25);
    }

    #[test]
    fn dimension_and_feasibility_validation() {
        let rates = random_rates(5, 21);
        let net = Network::complete(5).unwrap();
        let y = vec![2, 1];
        let twist = count_twist(&y, &rates, 0.8);
        // Horizon mismatch.
        assert!(run_csmc_sis(&rates, &net, 0.8, &[2, 1, 0], &twist, 8, 1, PmfMode::Exact)
            .is_err());
        // Population mismatch.
        let small = random_rates(4, 21);
        assert!(
            run_csmc_sis(&small, &Network::complete(4).unwrap(), 0.8, &y, &twist, 8, 1, PmfMode::Exact)
                .is_err()
        );
        // Clustered twist without clusters on the rates.
        let clustered_rates =
            random_rates(5, 23).with_clusters(vec![0, 0, 1, 1, 1]).unwrap();
        let twist = SisTwist::Clustered(
            bif_sis_clustered(&y, &clustered_rates, 0.8, PmfMode::Exact).unwrap(),
        );
        assert!(run_csmc_sis(&rates, &net, 0.8, &y, &twist, 8, 1, PmfMode::Exact).is_err());
        // Structurally impossible data: nobody can ever be infected.
        let mut dead = random_rates(5, 25);
        dead.alpha0 = ProbVector::new(vec![0.0; 5]).unwrap();
        let twist = count_twist(&[3], &dead, 1.0);
        match run_csmc_sis(&dead, &net, 1.0, &[3], &twist, 8, 1, PmfMode::Exact) {
            Err(Error::Infeasible(_)) => {}
            other => panic!("expected infeasibility, got {other:?}"),
        }
    }

    #[test]
    fn sir_telescoping_holds_for_a_single_particle() {
        let rates = random_rates(5, 27);
        let net = Network::complete(5).unwrap();
        let y = vec![2, 1, 2, 0];
        let bif = bif_sir(&y, &rates, 0.75).unwrap();
        let out = run_csmc_sir(&rates, &net, 0.75, &y, &bif, 1, 41).unwrap();
        let path: Vec<SirState> =
            out.system.states.iter().map(|row| row[0].clone()).collect();
        let target = crate::checks::path_log_density_sir(&rates, &net, 0.75, &path, &y);
        let proposal: f64 = out.system.proposal_log_density.iter().map(|row| row[0]).sum();
        let weights: f64 = out.system.log_weights.iter().map(|row| row[0]).sum();
        assert!(
            (weights - (target - proposal)).abs() < 1e-8,
            "telescoping residual {}",
            (weights - (target - proposal)).abs()
        );
    }
}
