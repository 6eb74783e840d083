//! Seed derivation and counter-based uniforms.
//!
//! Every random decision in the crate is a pure function of a 64-bit seed
//! and a counter (usually a row index), so results do not depend on the
//! order in which rows are visited or on how work is scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives an independent child seed from `seed` and a tag.
#[inline]
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    mix64(mix64(seed.wrapping_add(GOLDEN)) ^ tag.wrapping_mul(GOLDEN).wrapping_add(0x632b_e59b_d9b4_e019))
}

/// Raw 64-bit hash for counter `index` under `seed`.
#[inline]
pub fn counter_bits(seed: u64, index: u64) -> u64 {
    mix64(derive_seed(seed, index) ^ 0xd1b5_4a32_d192_ed03)
}

/// Uniform draw in `[0, 1)` for counter `index` under `seed` (53 bits).
#[inline]
pub fn counter_uniform(seed: u64, index: u64) -> f64 {
    (counter_bits(seed, index) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Stream generator for dense Gaussian draws.
pub fn stream(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stable tags used to split a configuration seed between pipeline stages.
pub(crate) mod tag {
    pub const SAMPLE: u64 = 1;
    pub const UNIFORM_SUBSET: u64 = 2;
    pub const BERNOULLI: u64 = 3;
    pub const SKETCH: u64 = 4;
    pub const PROBE: u64 = 5;
    pub const LEVEL: u64 = 6;
    pub const ITERATION: u64 = 7;
    pub const STAGE: u64 = 8;
    pub const TRIAL: u64 = 9;
}
