//! Seeding conventions.
//!
//! Every random object is drawn from its own ChaCha20 stream
//! (`rand_chacha::ChaCha20Rng`, a counter-based generator), seeded from a
//! 64-bit value. Child seeds are derived from a parent seed and a stream
//! index with the SplitMix64 finalizer, so trial `k` of a sweep sees the same
//! randomness no matter how many trials run or in which order.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub type Rng = ChaCha20Rng;

/// Stream tags for the independent draws of one trial.
pub mod stream {
    pub const SIGNAL: u64 = 1;
    pub const ENSEMBLE: u64 = 2;
    pub const NOISE: u64 = 3;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive the seed of child stream `index` from `parent`.
pub fn derive_seed(parent: u64, index: u64) -> u64 {
    splitmix64(splitmix64(parent) ^ index.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha20Rng::seed_from_u64(seed)
}
