//! Seed handling. Every stochastic draw in the crate comes from a
//! [`ChaCha8Rng`] whose seed is derived from a master seed and a stream tag,
//! so runs are reproducible and independent streams never overlap.

pub use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from a parent seed and a list of tags.
pub fn derive_seed(parent: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(mix64(parent), |acc, &t| mix64(acc ^ mix64(t)))
}

pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Named stream tags used with [`derive_seed`].
pub mod stream {
    pub const FLEET: u64 = 1;
    pub const CONTRACT: u64 = 2;
    pub const SCENARIOS: u64 = 3;
    pub const GROUPS: u64 = 4;
    pub const SVR: u64 = 5;
}
