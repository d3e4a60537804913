//! Conditioned Bernoulli sampling: the law of independent heterogeneous
//! indicators given their sum.

use rand::Rng;

use super::{PmfTable, ProbVector};
use crate::error::{Error, Result};
use crate::state::PopulationState;

/// Log density of `x` under `CondBer(α, i)`, i.e. independent
/// `X^n ~ Ber(α^n)` conditioned on `Σ X^n = i`.
///
/// Uses the identity `CondBer(x; α, i) = ∏_n Ber(x^n; α^n) / PoiBin(i; α)`;
/// `table` must have been built from the same `α`. Returns `NEG_INFINITY`
/// when `I(x) ≠ i` or the conditioning event has no mass.
pub fn condber_logpmf(
    x: &PopulationState,
    alpha: &ProbVector,
    i: usize,
    table: &PmfTable,
) -> f64 {
    debug_assert_eq!(x.len(), alpha.len());
    debug_assert_eq!(table.n(), alpha.len());
    if x.count_ones() != i {
        return f64::NEG_INFINITY;
    }
    let denom = if table.n() == 0 {
        if i == 0 { 1.0 } else { 0.0 }
    } else {
        table.q(i, 1)
    };
    if denom <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let mut log_num = 0.0;
    for (n, &a) in alpha.iter().enumerate() {
        let p = if x.get(n) { a } else { 1.0 - a };
        if p <= 0.0 {
            return f64::NEG_INFINITY;
        }
        log_num += p.ln();
    }
    log_num - denom.ln()
}

/// Draws `x ~ CondBer(α, i)` by the sequential decomposition.
///
/// Agent `n` fires with probability `α^n q(r-1, n+1) / q(r, n)` where `r`
/// counts the ones still to be placed; once `r` hits zero or equals the
/// number of remaining agents the tail is forced. Errors if `PoiBin(i; α)`
/// carries no mass.
pub fn condber_sample<R: Rng + ?Sized>(
    rng: &mut R,
    alpha: &ProbVector,
    i: usize,
    table: &PmfTable,
) -> Result<PopulationState> {
    let n = alpha.len();
    debug_assert_eq!(table.n(), n);
    if i > n {
        return Err(Error::Infeasible(format!("target count {i} exceeds population {n}")));
    }
    let mut x = PopulationState::zeros(n);
    if n == 0 {
        return Ok(x);
    }
    if table.q(i, 1) <= 0.0 {
        return Err(Error::Infeasible(format!(
            "PoiBin mass at count {i} is zero; cannot condition"
        )));
    }
    let mut remaining = i;
    for m in 1..=n {
        if remaining == 0 {
            break;
        }
        if remaining == n - m + 1 {
            for k in m..=n {
                x.set(k - 1, true);
            }
            break;
        }
        // Here 1 ≤ remaining < n - m + 1, so column m+1 exists.
        let p1 = alpha[m - 1] * table.q(remaining - 1, m + 1) / table.q(remaining, m);
        if rng.gen::<f64>() < p1 {
            x.set(m - 1, true);
            remaining -= 1;
        }
    }
    debug_assert_eq!(x.count_ones(), i);
    Ok(x)
}

/// One swap-move MCMC step that leaves `CondBer(α, ·)` invariant on the
/// fixed-sum slice containing `x`.
///
/// Picks a uniformly random one-agent `n₁` and zero-agent `n₀` and accepts
/// the swap with probability `min{1, α^{n₀}(1-α^{n₁}) / [α^{n₁}(1-α^{n₀})]}`.
/// States with an empty or full population are returned unchanged.
pub fn condber_swap_step<R: Rng + ?Sized>(
    rng: &mut R,
    mut x: PopulationState,
    alpha: &ProbVector,
) -> PopulationState {
    let n = x.len();
    debug_assert_eq!(alpha.len(), n);
    let ones = x.count_ones();
    if ones == 0 || ones == n {
        return x;
    }
    let n1 = x.select_one(rng.gen_range(0..ones));
    let n0 = x.select_zero(rng.gen_range(0..n - ones));
    let num = alpha[n0] * (1.0 - alpha[n1]);
    let den = alpha[n1] * (1.0 - alpha[n0]);
    let accept = if den <= 0.0 {
        // Moving off a forced-on agent (or onto a forced-off one) only
        // happens when the proposal has positive density and the current
        // configuration none, which cannot occur along the chain.
        num > 0.0
    } else {
        num >= den || rng.gen::<f64>() < num / den
    };
    if accept {
        x.set(n1, false);
        x.set(n0, true);
    }
    x
}
