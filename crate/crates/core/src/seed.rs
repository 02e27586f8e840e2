//! Deterministic seed derivation.
//!
//! Every random object in the crate is drawn from a `ChaCha8Rng` seeded by a
//! 64-bit value. Sub-streams (per trial, per shard, per matrix) are derived
//! from a master seed with a SplitMix64 finalizer so that results do not
//! depend on scheduling or worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from `master` and a stream label / index pair.
pub fn derive(master: u64, stream: u64, index: u64) -> u64 {
    mix64(mix64(master ^ mix64(stream)).wrapping_add(index))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stream labels, so that e.g. the matrix and the signal of one trial never
/// share a stream.
pub mod stream {
    pub const MATRIX: u64 = 1;
    pub const SIGNAL: u64 = 2;
    pub const SUPPORT: u64 = 3;
    pub const NOISE: u64 = 4;
    pub const TRIAL: u64 = 5;
    pub const SHARD: u64 = 6;
    pub const KERNEL: u64 = 7;
    pub const POWER: u64 = 8;
    pub const SAMPLES: u64 = 9;
}
