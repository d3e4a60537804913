//! Count distributions for heterogeneous Bernoulli populations.
//!
//! The Poisson-Binomial law of `I(X) = Σ_n X^n` for independent
//! `X^n ~ Ber(α^n)` is the workhorse of every filter in this crate. It is
//! computed by a backward dynamic program whose intermediate table doubles
//! as the ingredient for conditioned-Bernoulli sampling, and approximated
//! by a translated Poisson when the quadratic cost is too much.

mod condber;
mod sumbin;

pub use condber::{condber_logpmf, condber_sample, condber_swap_step};
pub use sumbin::{sumbin_pmf, transpoi_sumbin_pmf};

use crate::error::{Error, Result};
use crate::numeric::LogFactorial;

/// Threshold below which DP table entries are flushed to exact zero.
pub(crate) const TABLE_UNDERFLOW: f64 = 1e-300;

/// A vector of per-agent probabilities, each validated into `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        for &p in &values {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidProbability(p));
            }
        }
        Ok(Self(values))
    }

    /// Entry-wise product with a scalar in `[0, 1]` (thinning).
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&c) {
            return Err(Error::InvalidProbability(c));
        }
        Ok(Self(self.0.iter().map(|&p| p * c).collect()))
    }

    /// `Σ_n α^n`, the mean of the associated count.
    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    /// `Σ_n α^n (1 - α^n)`, the variance of the associated count.
    pub fn variance_sum(&self) -> f64 {
        self.0.iter().map(|&p| p * (1.0 - p)).sum()
    }
}

impl std::ops::Deref for ProbVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// A pmf on a contiguous integer support `[offset, offset + len)`.
#[derive(Clone, Debug)]
pub struct DiscretePmf {
    offset: i64,
    masses: Vec<f64>,
}

impl DiscretePmf {
    pub fn new(offset: i64, masses: Vec<f64>) -> Self {
        Self { offset, masses }
    }

    /// Point mass at `at`.
    pub fn point_mass(at: i64) -> Self {
        Self { offset: at, masses: vec![1.0] }
    }

    #[inline]
    pub fn offset(&self) -> i64 {
        self.offset
    }

    #[inline]
    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    /// Mass at integer `i` (zero outside the stored support).
    pub fn mass(&self, i: i64) -> f64 {
        if i < self.offset {
            return 0.0;
        }
        let ix = (i - self.offset) as usize;
        self.masses.get(ix).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.masses.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.masses
            .iter()
            .enumerate()
            .map(|(k, &m)| (self.offset + k as i64) as f64 * m)
            .sum()
    }

    pub fn variance(&self) -> f64 {
        let mu = self.mean();
        self.masses
            .iter()
            .enumerate()
            .map(|(k, &m)| {
                let d = (self.offset + k as i64) as f64 - mu;
                d * d * m
            })
            .sum()
    }

    /// Rescales the masses to sum to one.
    pub fn normalized(mut self) -> Self {
        let total = self.total();
        if total > 0.0 {
            for m in &mut self.masses {
                *m /= total;
            }
        }
        self
    }
}

/// Backward DP table for a Poisson-Binomial distribution.
///
/// Entry `q(i, m)` is `PoiBin(i; α^{m:N})` — the probability that exactly
/// `i` of the agents `m..=N` (1-based) fire. Column 1 is the full pmf; the
/// remaining columns drive sequential conditioned-Bernoulli sampling, which
/// is why the whole table is kept rather than just its first column.
#[derive(Clone, Debug)]
pub struct PmfTable {
    n: usize,
    /// Column-major `(n+1) × n` storage; empty when `n = 0`.
    q: Vec<f64>,
}

impl PmfTable {
    /// Number of agents `N`.
    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    /// `q(i, m) = PoiBin(i; α^{m:N})` for `m ∈ [1, N]`; zero off-support.
    #[inline]
    pub fn q(&self, i: usize, m: usize) -> f64 {
        debug_assert!((1..=self.n).contains(&m));
        if i > self.n {
            return 0.0;
        }
        self.q[(m - 1) * (self.n + 1) + i]
    }

    /// The full pmf `PoiBin(i; α)` for `i ∈ [0, N]`.
    pub fn pmf(&self) -> Vec<f64> {
        if self.n == 0 {
            return vec![1.0];
        }
        self.q[..self.n + 1].to_vec()
    }

    /// Log pmf with exact zeros mapped to `NEG_INFINITY`.
    pub fn log_pmf(&self) -> Vec<f64> {
        self.pmf()
            .iter()
            .map(|&p| if p > 0.0 { p.ln() } else { f64::NEG_INFINITY })
            .collect()
    }
}

/// Exact Poisson-Binomial DP over `α`, in O(N²) time and space.
///
/// The recursion runs backward over agents: the last column is the
/// Bernoulli law of agent N alone, and each earlier column mixes the next
/// one according to whether its agent fires. Entries that underflow below
/// `1e-300` are kept as exact zeros.
pub fn poibin_table(alpha: &ProbVector) -> PmfTable {
    let n = alpha.len();
    if n == 0 {
        return PmfTable { n, q: Vec::new() };
    }
    let rows = n + 1;
    let mut q = vec![0.0; rows * n];
    // Column N (0-based n-1): Bernoulli of the final agent.
    q[(n - 1) * rows] = 1.0 - alpha[n - 1];
    q[(n - 1) * rows + 1] = alpha[n - 1];
    for m in (0..n - 1).rev() {
        let a = alpha[m];
        let (head, tail) = q.split_at_mut((m + 1) * rows);
        let col = &mut head[m * rows..];
        let next = &tail[..rows];
        col[0] = flush((1.0 - a) * next[0]);
        // Only i ≤ N - m + 1 can be reached from column m; higher rows stay 0.
        let top = n - m;
        for i in 1..=top {
            col[i] = flush(a * next[i - 1] + (1.0 - a) * next[i]);
        }
    }
    PmfTable { n, q }
}

#[inline]
fn flush(v: f64) -> f64 {
    if v < TABLE_UNDERFLOW {
        0.0
    } else {
        v
    }
}

/// Translated Poisson approximation to `PoiBin(·; α)`, truncated to
/// `[0, N]` and renormalized.
///
/// With `μ = Σ α^n` and `σ² = Σ α^n(1-α^n)`, mass at `i` is
/// `Poi(i - ⌊μ-σ²⌋; σ² + frac(μ-σ²))` for `i ≥ ⌊μ-σ²⌋` and zero below. A
/// fully degenerate `α` (σ² = 0) collapses to a point mass at `μ`.
pub fn transpoi_pmf(alpha: &ProbVector) -> DiscretePmf {
    let n = alpha.len();
    let mu = alpha.sum();
    let var = alpha.variance_sum();
    if var == 0.0 {
        // Every α^n is 0 or 1, so μ is an integer count in [0, N].
        return DiscretePmf::point_mass(mu.round() as i64);
    }
    // μ - σ² = Σ (α^n)² ≥ 0, so the shift is a valid count.
    let gap = mu - var;
    let shift = gap.floor();
    let rate = var + (gap - shift);
    let shift = shift as usize;
    let lf = LogFactorial::new(n.saturating_sub(shift));
    let mut masses = vec![0.0; n + 1];
    for (i, m) in masses.iter_mut().enumerate().take(n + 1).skip(shift.min(n)) {
        *m = lf.ln_poisson_pmf(i - shift, rate).exp();
    }
    DiscretePmf::new(0, masses).normalized()
}
