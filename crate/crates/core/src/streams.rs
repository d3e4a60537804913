//! Deterministic RNG sub-stream derivation.
//!
//! Every stochastic routine draws from a stream keyed by `(seed, tag,
//! indices)` rather than sharing one sequential generator. Per-particle
//! streams are keyed by `(t, p)`, replicate streams by the replicate index,
//! and so on. This makes output independent of scheduling order and means
//! adding replicates or particles never perturbs existing draws.
//!
//! The derivation is a fixed splitmix64 absorption of the tag bytes and
//! indices — stable across platforms and releases by construction (no
//! reliance on `std` hashers).

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a 64-bit sub-seed from `(seed, tag, indices)`.
pub fn derive_seed(seed: u64, tag: &str, indices: &[u64]) -> u64 {
    let mut state = seed ^ 0x6a09_e667_f3bc_c908;
    let mut acc = splitmix64(&mut state);
    for chunk in tag.as_bytes().chunks(8) {
        let mut word = [0u8; 8];
        word[..chunk.len()].copy_from_slice(chunk);
        state ^= u64::from_le_bytes(word);
        acc ^= splitmix64(&mut state);
    }
    for &ix in indices {
        state ^= ix;
        acc ^= splitmix64(&mut state);
    }
    acc
}

/// A ChaCha8 generator on the sub-stream keyed by `(seed, tag, indices)`.
pub fn stream_rng(seed: u64, tag: &str, indices: &[u64]) -> ChaCha8Rng {
    let mut state = derive_seed(seed, tag, indices);
    let mut key = [0u8; 32];
    for word in key.chunks_exact_mut(8) {
        word.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
