//! Deterministic seed derivation.
//!
//! A derived seed is `mix(mix(master ^ fnv1a(label)) + index * φ64)` where
//! `mix` is the SplitMix64 finalizer and `φ64 = 0x9E37_79B9_7F4A_7C15`. The
//! label separates independent streams (e.g. `"telegraph/prepared"`), the
//! index addresses one trajectory or shot inside a stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(label: &str) -> u64 {
    label
        .bytes()
        .fold(FNV_OFFSET, |h, b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// Seed for item `index` of the stream `label` under `master`.
pub fn seed_derive(master: u64, label: &str, index: u64) -> u64 {
    let stream = splitmix64(master ^ fnv1a(label));
    splitmix64(stream.wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

/// Generator used for every stochastic routine in the crate.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn stream_rng(master: u64, label: &str, index: u64) -> ChaCha8Rng {
    rng_from_seed(seed_derive(master, label, index))
}
