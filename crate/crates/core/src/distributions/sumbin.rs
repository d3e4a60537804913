//! Sums of two independent binomials, exactly and via translated Poisson.
//!
//! These drive the backward information filter for the homogenised count
//! chain: new infections are `Bin(s, hλ̄i/N)` and surviving infections
//! `Bin(i, 1-hγ̄)`, so the next infected count is their sum.

use super::DiscretePmf;
use crate::numeric::LogFactorial;

/// Exact pmf of `Bin(n₁, p₁) + Bin(n₂, p₂)` on `[0, n₁+n₂]` by convolution.
pub fn sumbin_pmf(n1: usize, p1: f64, n2: usize, p2: f64) -> DiscretePmf {
    let lf = LogFactorial::new(n1.max(n2));
    let b1: Vec<f64> = (0..=n1).map(|k| lf.ln_binom_pmf(k, n1, p1).exp()).collect();
    let b2: Vec<f64> = (0..=n2).map(|k| lf.ln_binom_pmf(k, n2, p2).exp()).collect();
    let mut masses = vec![0.0; n1 + n2 + 1];
    for (j, &m1) in b1.iter().enumerate() {
        if m1 == 0.0 {
            continue;
        }
        for (k, &m2) in b2.iter().enumerate() {
            masses[j + k] += m1 * m2;
        }
    }
    DiscretePmf::new(0, masses)
}

/// Translated Poisson approximation of `Bin(n₁, p₁) + Bin(n₂, p₂)`,
/// truncated to `[0, n₁+n₂]` and renormalized.
///
/// Matches the first two moments: `μ = n₁p₁ + n₂p₂`,
/// `σ² = n₁p₁(1-p₁) + n₂p₂(1-p₂)`.
pub fn transpoi_sumbin_pmf(n1: usize, p1: f64, n2: usize, p2: f64) -> DiscretePmf {
    let n = n1 + n2;
    let mu = n1 as f64 * p1 + n2 as f64 * p2;
    let var = n1 as f64 * p1 * (1.0 - p1) + n2 as f64 * p2 * (1.0 - p2);
    if var == 0.0 {
        return DiscretePmf::point_mass(mu.round() as i64);
    }
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
