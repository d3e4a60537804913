//! Log-space numeric primitives shared across the crate.
//!
//! Weights, likelihoods and backward tables are all carried in log space;
//! the helpers here implement the usual max-shifted reductions so that
//! `f64::NEG_INFINITY` cleanly represents zero mass throughout.

/// Natural log of the sum of exponentials, stabilised by a max shift.
///
/// Returns `NEG_INFINITY` for an empty slice or when every entry is
/// `NEG_INFINITY`. `NaN` inputs propagate.
pub fn logsumexp(values: &[f64]) -> f64 {
    let mut max = f64::NEG_INFINITY;
    for &v in values {
        if v.is_nan() {
            return f64::NAN;
        }
        if v > max {
            max = v;
        }
    }
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = values.iter().map(|&v| (v - max).exp()).sum();
    max + sum.ln()
}

/// `ln(exp(a) + exp(b))` without leaving log space.
pub fn logaddexp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Logistic function `1 / (1 + exp(-x))`, saturating cleanly at the tails.
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Inverse of [`logistic`]: `ln(p / (1 - p))`.
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Cached `ln k!` values, sized once for the largest population in play.
///
/// Every factorial argument in the crate is bounded by the population size
/// (plus convolution partners), so a flat table beats repeated `ln_gamma`
/// calls in the filter hot loops.
#[derive(Debug, Clone)]
pub struct LogFactorial {
    table: Vec<f64>,
}

impl LogFactorial {
    /// Table covering `0! ..= max_n!`.
    pub fn new(max_n: usize) -> Self {
        let mut table = vec![0.0; max_n + 1];
        for k in 1..=max_n {
            table[k] = table[k - 1] + (k as f64).ln();
        }
        Self { table }
    }

    #[inline]
    pub fn ln_factorial(&self, k: usize) -> f64 {
        self.table[k]
    }

    /// `ln C(n, k)`; requires `k <= n <= max_n`.
    #[inline]
    pub fn ln_choose(&self, n: usize, k: usize) -> f64 {
        debug_assert!(k <= n);
        self.table[n] - self.table[k] - self.table[n - k]
    }

    /// `ln Bin(k; n, p)`, with the usual conventions at `p = 0` and `p = 1`
    /// and `NEG_INFINITY` outside the support.
    pub fn ln_binom_pmf(&self, k: usize, n: usize, p: f64) -> f64 {
        if k > n {
            return f64::NEG_INFINITY;
        }
        if p <= 0.0 {
            return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
        }
        if p >= 1.0 {
            return if k == n { 0.0 } else { f64::NEG_INFINITY };
        }
        self.ln_choose(n, k) + k as f64 * p.ln() + (n - k) as f64 * (1.0 - p).ln()
    }

    /// `ln Poi(k; rate)`; a zero rate is a point mass at zero.
    pub fn ln_poisson_pmf(&self, k: usize, rate: f64) -> f64 {
        if rate <= 0.0 {
            return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
        }
        k as f64 * rate.ln() - rate - self.table[k]
    }
}

/// Normalises log weights in place to linear probabilities.
///
/// Returns the log of the *sum* of the unnormalised weights, or
/// `NEG_INFINITY` when every weight is zero (the output is then all zeros,
/// signalling a collapsed system to the caller).
pub fn normalize_log_weights(log_w: &[f64], out: &mut Vec<f64>) -> f64 {
    let total = logsumexp(log_w);
    out.clear();
    if total == f64::NEG_INFINITY {
        out.resize(log_w.len(), 0.0);
        return total;
    }
    out.extend(log_w.iter().map(|&w| (w - total).exp()));
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logsumexp_matches_direct_sum() {
        let v = [0.3_f64, 1.7, -2.0];
        let direct: f64 = v.iter().map(|x| x.exp()).sum();
        assert!((logsumexp(&v) - direct.ln()).abs() < 1e-12);
    }

    #[test]
    fn logsumexp_handles_empty_and_neg_inf() {
        assert_eq!(logsumexp(&[]), f64::NEG_INFINITY);
        assert_eq!(
            logsumexp(&[f64::NEG_INFINITY, f64::NEG_INFINITY]),
            f64::NEG_INFINITY
        );
        // A single finite entry survives alongside zeros.
        assert!((logsumexp(&[f64::NEG_INFINITY, 0.0]) - 0.0).abs() < 1e-15);
    }

    #[test]
    fn logsumexp_is_shift_invariant_under_large_magnitudes() {
        let v = [-1000.0_f64, -1000.5, -999.2];
        let shifted: Vec<f64> = v.iter().map(|x| x + 1000.0).collect();
        assert!((logsumexp(&v) + 1000.0 - logsumexp(&shifted)).abs() < 1e-10);
    }

    #[test]
    fn logaddexp_agrees_with_logsumexp() {
        let a = -3.2;
        let b = 0.7;
        assert!((logaddexp(a, b) - logsumexp(&[a, b])).abs() < 1e-14);
        assert_eq!(logaddexp(f64::NEG_INFINITY, b), b);
    }

    #[test]
    fn logistic_matches_tanh_identity() {
        // sigma(x) = (1 + tanh(x/2)) / 2 is an independent evaluation route.
        for &x in &[-5.0f64, -1.2, 0.0, 0.3, 1.2, 7.5] {
            let via_tanh = 0.5 * (1.0 + (0.5 * x).tanh());
            assert!((logistic(x) - via_tanh).abs() < 1e-12);
        }
    }

    #[test]
    fn logit_inverts_logistic() {
        for &p in &[1e-6, 0.25, 0.5, 0.8, 1.0 - 1e-6] {
            assert!((logistic(logit(p)) - p).abs() < 1e-9);
        }
    }

    #[test]
    fn binomial_pmf_row_sums_to_one() {
        let lf = LogFactorial::new(32);
        for &(n, p) in &[(0usize, 0.4), (5, 0.0), (7, 1.0), (12, 0.31), (32, 0.87)] {
            let row: Vec<f64> = (0..=n).map(|k| lf.ln_binom_pmf(k, n, p)).collect();
            assert!((logsumexp(&row)).abs() < 1e-12, "n={n} p={p}");
        }
    }

    #[test]
    fn binomial_pmf_known_value() {
        // Bin(2; 3, 0.5) = 3/8.
        let lf = LogFactorial::new(8);
        assert!((lf.ln_binom_pmf(2, 3, 0.5) - (0.375_f64).ln()).abs() < 1e-14);
    }

    #[test]
    fn poisson_pmf_known_value() {
        // Poi(2; 1.5) = 1.5^2 e^{-1.5} / 2.
        let lf = LogFactorial::new(8);
        let expect = (1.5_f64.powi(2) * (-1.5_f64).exp() / 2.0).ln();
        assert!((lf.ln_poisson_pmf(2, 1.5) - expect).abs() < 1e-14);
        assert_eq!(lf.ln_poisson_pmf(3, 0.0), f64::NEG_INFINITY);
        assert_eq!(lf.ln_poisson_pmf(0, 0.0), 0.0);
    }

    #[test]
    fn normalize_log_weights_sums_to_one() {
        let mut out = Vec::new();
        let total = normalize_log_weights(&[-700.0, -701.0, -699.5], &mut out);
        assert!(total.is_finite());
        let s: f64 = out.iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
        assert!(out.iter().all(|&w| w > 0.0));
    }

    #[test]
    fn normalize_log_weights_flags_total_collapse() {
        let mut out = Vec::new();
        let total = normalize_log_weights(&[f64::NEG_INFINITY; 3], &mut out);
        assert_eq!(total, f64::NEG_INFINITY);
        assert!(out.iter().all(|&w| w == 0.0));
    }
}
