//! Bit-packed agent indicator vectors.
//!
//! A `PopulationState` stores one binary indicator per agent in packed
//! 64-bit words together with a maintained popcount, so infected totals and
//! per-agent lookups are O(1) and whole-population scans touch N/64 words.

/// Binary state of an N-agent population (e.g. infected / susceptible).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PopulationState {
    words: Vec<u64>,
    n: usize,
    ones: usize,
}

impl PopulationState {
    /// All-zero state over `n` agents.
    pub fn zeros(n: usize) -> Self {
        Self {
            words: vec![0; n.div_ceil(64)],
            n,
            ones: 0,
        }
    }

    /// Builds from per-agent booleans.
    pub fn from_bools(bits: &[bool]) -> Self {
        let mut s = Self::zeros(bits.len());
        for (ix, &b) in bits.iter().enumerate() {
            if b {
                s.set(ix, true);
            }
        }
        s
    }

    /// Builds from 0/1 bytes.
    pub fn from_indicators(bits: &[u8]) -> Self {
        let mut s = Self::zeros(bits.len());
        for (ix, &b) in bits.iter().enumerate() {
            if b != 0 {
                s.set(ix, true);
            }
        }
        s
    }

    /// Builds an `n ≤ 64` state from the low bits of `mask` (bit `k` is
    /// agent `k`). Used by the exact oracles to enumerate configurations.
    pub fn from_mask(n: usize, mask: u64) -> Self {
        assert!(n <= 64, "mask construction limited to 64 agents");
        debug_assert!(n == 64 || mask < (1u64 << n));
        Self {
            words: vec![mask],
            n,
            ones: mask.count_ones() as usize,
        }
    }

    /// Inverse of [`from_mask`] for `n ≤ 64`.
    pub fn to_mask(&self) -> u64 {
        assert!(self.n <= 64);
        self.words[0]
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Number of agents set to one (the cached popcount).
    #[inline]
    pub fn count_ones(&self) -> usize {
        self.ones
    }

    #[inline]
    pub fn get(&self, ix: usize) -> bool {
        debug_assert!(ix < self.n);
        (self.words[ix / 64] >> (ix % 64)) & 1 == 1
    }

    /// Sets agent `ix`, keeping the popcount cache in sync.
    pub fn set(&mut self, ix: usize, value: bool) {
        debug_assert!(ix < self.n);
        let word = &mut self.words[ix / 64];
        let bit = 1u64 << (ix % 64);
        let was = *word & bit != 0;
        if value && !was {
            *word |= bit;
            self.ones += 1;
        } else if !value && was {
            *word &= !bit;
            self.ones -= 1;
        }
    }

    /// Indices of agents set to one, ascending.
    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(move |(w, &word)| {
            let base = w * 64;
            let mut bits = word;
            std::iter::from_fn(move || {
                if bits == 0 {
                    None
                } else {
                    let tz = bits.trailing_zeros() as usize;
                    bits &= bits - 1;
                    Some(base + tz)
                }
            })
        })
    }

    /// Index of the `k`-th (0-based) agent set to one.
    pub fn select_one(&self, k: usize) -> usize {
        debug_assert!(k < self.ones);
        let mut remaining = k;
        for (w, &word) in self.words.iter().enumerate() {
            let count = word.count_ones() as usize;
            if remaining < count {
                let mut bits = word;
                for _ in 0..remaining {
                    bits &= bits - 1;
                }
                return w * 64 + bits.trailing_zeros() as usize;
            }
            remaining -= count;
        }
        unreachable!("select_one out of range")
    }

    /// Index of the `k`-th (0-based) agent set to zero.
    pub fn select_zero(&self, k: usize) -> usize {
        debug_assert!(k < self.n - self.ones);
        let mut remaining = k;
        for (w, &word) in self.words.iter().enumerate() {
            let width = (self.n - w * 64).min(64);
            let mask = if width == 64 { u64::MAX } else { (1u64 << width) - 1 };
            let zeros = !word & mask;
            let count = zeros.count_ones() as usize;
            if remaining < count {
                let mut bits = zeros;
                for _ in 0..remaining {
                    bits &= bits - 1;
                }
                return w * 64 + bits.trailing_zeros() as usize;
            }
            remaining -= count;
        }
        unreachable!("select_zero out of range")
    }

    /// Per-agent 0/1 bytes, for serialization.
    pub fn to_indicators(&self) -> Vec<u8> {
        (0..self.n).map(|ix| self.get(ix) as u8).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn set_get_and_popcount_stay_consistent() {
        let mut s = PopulationState::zeros(130);
        s.set(0, true);
        s.set(64, true);
        s.set(129, true);
        s.set(64, true); // idempotent
        assert_eq!(s.count_ones(), 3);
        assert!(s.get(0) && s.get(64) && s.get(129));
        s.set(64, false);
        assert_eq!(s.count_ones(), 2);
        assert!(!s.get(64));
        assert_eq!(s.ones().collect::<Vec<_>>(), vec![0, 129]);
    }

    #[test]
    fn mask_round_trip() {
        let s = PopulationState::from_mask(6, 0b101101);
        assert_eq!(s.count_ones(), 4);
        assert_eq!(s.to_mask(), 0b101101);
        assert_eq!(s.to_indicators(), vec![1, 0, 1, 1, 0, 1]);
    }

    #[test]
    fn select_matches_enumeration() {
        let s = PopulationState::from_indicators(&[0, 1, 1, 0, 0, 1, 0]);
        assert_eq!(s.select_one(0), 1);
        assert_eq!(s.select_one(1), 2);
        assert_eq!(s.select_one(2), 5);
        assert_eq!(s.select_zero(0), 0);
        assert_eq!(s.select_zero(1), 3);
        assert_eq!(s.select_zero(3), 6);
    }

    #[test]
    fn select_crosses_word_boundaries() {
        let mut s = PopulationState::zeros(200);
        for ix in [3usize, 63, 64, 140, 199] {
            s.set(ix, true);
        }
        assert_eq!(s.select_one(2), 64);
        assert_eq!(s.select_one(4), 199);
        // 0..=2 zero-run skips index 3.
        assert_eq!(s.select_zero(3), 4);
    }
}
