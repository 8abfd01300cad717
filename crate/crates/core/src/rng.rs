//! Seed derivation and the generator used everywhere randomness is needed.
//!
//! All randomness in the crate flows from explicit `u64` seeds. Child seeds
//! are derived with a SplitMix64-based combiner so that, for example, the
//! split used for prefix length `k` and repeat `r` depends only on
//! `(base_seed, k, r)` and not on how many other tasks ran before it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Generator type: ChaCha with 8 rounds, bit-stable across platforms.
pub type StableRng = ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// One SplitMix64 output step.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Combines a base seed with a path of integer labels into a child seed.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(base), |acc, &label| splitmix64(acc ^ splitmix64(label)))
}

pub fn rng_from_seed(seed: u64) -> StableRng {
    StableRng::seed_from_u64(seed)
}

/// In-place Fisher-Yates shuffle.
pub fn shuffle<T, R: Rng>(items: &mut [T], rng: &mut R) {
    for i in (1..items.len()).rev() {
        let j = rng.gen_range(0..=i);
        items.swap(i, j);
    }
}
