//! Count-space backward information filters: the twisting functions for
//! the controlled particle filters.
//!
//! Each table approximates `ψ_t(·) ≈ p(y_{t:T} | summary at t)` under the
//! homogenised (coarse-grained) dynamics, stored in log space. The SIS
//! variant lives on the infected count, the clustered variant on a tuple
//! of per-cluster counts, and the SIR variant on `(susceptible, infected)`
//! pairs.

use crate::distributions::{sumbin_pmf, transpoi_sumbin_pmf};
use crate::error::{Error, Result};
use crate::model::{AgentRates, ClusterRates};
use crate::numeric::{logsumexp, LogFactorial};
use crate::sir::sir_summary_transition_coarse;
use crate::smc::PmfMode;

/// ψ over the infected count: `log_psi[t][i]`, `i ∈ [0:N]`.
#[derive(Clone, Debug)]
pub struct BifSis {
    n: usize,
    log_psi: Vec<Vec<f64>>,
}

impl BifSis {
    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of time slices, `T + 1`.
    pub fn steps(&self) -> usize {
        self.log_psi.len()
    }

    #[inline]
    pub fn log_psi(&self, t: usize, i: usize) -> f64 {
        self.log_psi[t][i]
    }

    pub fn slice(&self, t: usize) -> &[f64] {
        &self.log_psi[t]
    }
}

/// ψ over per-cluster infected counts, flattened mixed-radix: cluster `k`
/// contributes `i^k · strides[k]` with `dims[k] = N_k + 1`.
#[derive(Clone, Debug)]
pub struct BifClustered {
    n: usize,
    dims: Vec<usize>,
    strides: Vec<usize>,
    log_psi: Vec<Vec<f64>>,
}

impl BifClustered {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn clusters(&self) -> usize {
        self.dims.len()
    }

    pub fn steps(&self) -> usize {
        self.log_psi.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn cells(&self) -> usize {
        self.log_psi[0].len()
    }

    #[inline]
    pub fn flat_index(&self, tuple: &[usize]) -> usize {
        debug_assert_eq!(tuple.len(), self.dims.len());
        tuple.iter().zip(&self.strides).map(|(&i, &s)| i * s).sum()
    }

    pub fn unflatten(&self, mut flat: usize, tuple: &mut [usize]) {
        for (k, &d) in self.dims.iter().enumerate() {
            tuple[k] = flat % d;
            flat /= d;
        }
    }

    #[inline]
    pub fn log_psi_flat(&self, t: usize, flat: usize) -> f64 {
        self.log_psi[t][flat]
    }

    pub fn log_psi_tuple(&self, t: usize, tuple: &[usize]) -> f64 {
        self.log_psi[t][self.flat_index(tuple)]
    }

    pub fn slice(&self, t: usize) -> &[f64] {
        &self.log_psi[t]
    }
}

/// ψ over `(s, i)` summaries: `log_psi[t][s·(N+1) + i]` on the simplex
/// `s + i ≤ N`; off-simplex entries are `-∞`. The terminal slice depends
/// on `i` alone and is also exposed directly.
#[derive(Clone, Debug)]
pub struct BifSir {
    n: usize,
    log_psi: Vec<Vec<f64>>,
    terminal: Vec<f64>,
}

impl BifSir {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn steps(&self) -> usize {
        self.log_psi.len()
    }

    #[inline]
    pub fn log_psi(&self, t: usize, s: usize, i: usize) -> f64 {
        self.log_psi[t][s * (self.n + 1) + i]
    }

    /// Terminal ψ as a function of the infected count only.
    #[inline]
    pub fn log_psi_terminal(&self, i: usize) -> f64 {
        self.terminal[i]
    }
}

fn trivial_cluster(rates: &AgentRates) -> ClusterRates {
    let n = rates.n();
    ClusterRates {
        assignment: vec![0; n],
        sizes: vec![n],
        lambda_bar: vec![rates.lambda_bar],
        gamma_bar: vec![rates.gamma_bar],
        members: vec![(0..n).collect()],
    }
}

/// Backward information filter over the infected count for the SIS
/// model: terminal slice `ψ_T(i) = Bin(y_T; i, ρ)𝟙(i ≥ y_T)`, then
/// `ψ_t(i) = Bin(y_t; i, ρ)𝟙 · Σ_j SumBin(j; N−i, λ̄ i/N, i, 1−γ̄) ψ_{t+1}(j)`.
pub fn bif_sis(y: &[u64], rates: &AgentRates, rho: f64, mode: PmfMode) -> Result<BifSis> {
    let clusters = trivial_cluster(rates);
    let table = clustered_recursion(y, &clusters, rates.n(), rho, mode)?;
    Ok(BifSis { n: rates.n(), log_psi: table.log_psi })
}

/// Clustered backward information filter: per-cluster counts with the
/// global infected fraction driving each cluster's infection rate.
/// Requires cluster assignments attached to `rates`.
pub fn bif_sis_clustered(
    y: &[u64],
    rates: &AgentRates,
    rho: f64,
    mode: PmfMode,
) -> Result<BifClustered> {
    let clusters = rates
        .clusters
        .as_ref()
        .ok_or_else(|| Error::InvalidModel("rates carry no cluster assignment".into()))?;
    clustered_recursion(y, clusters, rates.n(), rho, mode)
}

fn clustered_recursion(
    y: &[u64],
    clusters: &ClusterRates,
    n: usize,
    rho: f64,
    mode: PmfMode,
) -> Result<BifClustered> {
    if y.is_empty() {
        return Err(Error::InvalidArgument("empty observation sequence".into()));
    }
    let total: usize = clusters.sizes.iter().sum();
    if total != n {
        return Err(Error::InvalidModel(format!(
            "cluster sizes sum to {total}, expected {n}"
        )));
    }
    let k_count = clusters.sizes.len();
    let dims: Vec<usize> = clusters.sizes.iter().map(|&s| s + 1).collect();
    let mut strides = vec![1usize; k_count];
    for k in 1..k_count {
        strides[k] = strides[k - 1] * dims[k - 1];
    }
    let cells: usize = dims.iter().product();
    let lf = LogFactorial::new(n);
    let horizon = y.len() - 1;
    let mut log_psi = vec![vec![f64::NEG_INFINITY; cells]; y.len()];

    let helper = BifClustered {
        n,
        dims: dims.clone(),
        strides: strides.clone(),
        log_psi: Vec::new(),
    };
    let mut tuple = vec![0usize; k_count];
    // Terminal slice: observation factor on the total count.
    {
        let row = crate::sis::obs_log_row(y[horizon], n, rho, &lf);
        for flat in 0..cells {
            helper.unflatten(flat, &mut tuple);
            let total_infected: usize = tuple.iter().sum();
            log_psi[horizon][flat] = row[total_infected];
        }
    }
    let mut pmf_logs: Vec<Vec<f64>> = vec![Vec::new(); k_count];
    let mut terms: Vec<f64> = Vec::with_capacity(cells);
    let mut j_tuple = vec![0usize; k_count];
    for t in (0..horizon).rev() {
        let row = crate::sis::obs_log_row(y[t], n, rho, &lf);
        let (head, tail) = log_psi.split_at_mut(t + 1);
        let next = &tail[0];
        let current = &mut head[t];
        for flat in 0..cells {
            helper.unflatten(flat, &mut tuple);
            let total_infected: usize = tuple.iter().sum();
            let obs = row[total_infected];
            if obs == f64::NEG_INFINITY {
                current[flat] = f64::NEG_INFINITY;
                continue;
            }
            let frac = total_infected as f64 / n as f64;
            for k in 0..k_count {
                let nk = clusters.sizes[k];
                let ik = tuple[k];
                let p_inf = clusters.lambda_bar[k] * frac;
                let p_stay = 1.0 - clusters.gamma_bar[k];
                let pmf = match mode {
                    PmfMode::Exact => sumbin_pmf(nk - ik, p_inf, ik, p_stay),
                    PmfMode::TransPoi => transpoi_sumbin_pmf(nk - ik, p_inf, ik, p_stay),
                };
                pmf_logs[k] = super::log_mass_row(&pmf, dims[k]);
            }
            terms.clear();
            for (jflat, &psi_next) in next.iter().enumerate() {
                if psi_next == f64::NEG_INFINITY {
                    continue;
                }
                helper.unflatten(jflat, &mut j_tuple);
                let mut lp = psi_next;
                for k in 0..k_count {
                    lp += pmf_logs[k][j_tuple[k]];
                }
                if lp > f64::NEG_INFINITY {
                    terms.push(lp);
                }
            }
            current[flat] = obs + logsumexp(&terms);
            debug_assert!(current[flat] <= 1e-9, "psi must stay below one");
        }
    }
    Ok(BifClustered { n, dims, strides, log_psi })
}

/// Backward information filter over `(s, i)` for the SIR model. The slice
/// at `T-1` contracts against the terminal count-only slice through the
/// SumBin marginal; earlier slices use the full coarse summary transition.
pub fn bif_sir(y: &[u64], rates: &AgentRates, rho: f64) -> Result<BifSir> {
    if y.is_empty() {
        return Err(Error::InvalidArgument("empty observation sequence".into()));
    }
    let n = rates.n();
    let lf = LogFactorial::new(n);
    let horizon = y.len() - 1;
    let width = n + 1;
    let mut log_psi = vec![vec![f64::NEG_INFINITY; width * width]; y.len()];

    let terminal_row = crate::sis::obs_log_row(y[horizon], n, rho, &lf);
    for s in 0..=n {
        for i in 0..=(n - s) {
            log_psi[horizon][s * width + i] = terminal_row[i];
        }
    }

    let (lam, gam) = (rates.lambda_bar, rates.gamma_bar);
    let mut terms = Vec::with_capacity(width * width);
    for t in (0..horizon).rev() {
        let row = crate::sis::obs_log_row(y[t], n, rho, &lf);
        let (head, tail) = log_psi.split_at_mut(t + 1);
        let next = &tail[0];
        let current = &mut head[t];
        for s in 0..=n {
            for i in 0..=(n - s) {
                let obs = row[i];
                if obs == f64::NEG_INFINITY {
                    continue;
                }
                let value = if t == horizon - 1 {
                    // Terminal ψ depends on i' only: contract through the
                    // infected-count marginal SumBin(i'; s, λ̄ i/N, i, 1−γ̄).
                    let pmf = sumbin_pmf(s, lam * i as f64 / n as f64, i, 1.0 - gam);
                    terms.clear();
                    for j in 0..=(s + i) {
                        let m = pmf.mass(j as i64);
                        if m > 0.0 && terminal_row[j] > f64::NEG_INFINITY {
                            terms.push(m.ln() + terminal_row[j]);
                        }
                    }
                    logsumexp(&terms)
                } else {
                    let law = sir_summary_transition_coarse(s, i, n, lam, gam);
                    terms.clear();
                    for s_next in 0..=s {
                        for i_next in 0..=(n - s_next) {
                            let m = law.mass(s_next, i_next);
                            if m == 0.0 {
                                continue;
                            }
                            let psi_next = next[s_next * width + i_next];
                            if psi_next > f64::NEG_INFINITY {
                                terms.push(m.ln() + psi_next);
                            }
                        }
                    }
                    logsumexp(&terms)
                };
                current[s * width + i] = obs + value;
                debug_assert!(current[s * width + i] <= 1e-9);
            }
        }
    }
    let terminal = terminal_row;
    Ok(BifSir { n, log_psi, terminal })
}
