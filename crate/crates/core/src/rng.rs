//! Deterministic seed derivation. Every random stream in the crate is a
//! ChaCha8 generator keyed by a seed derived from (root seed, tag, index),
//! so parallel and sequential execution draw identical numbers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(seed: u64, tag: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(seed) ^ tag) ^ index)
}

pub fn stream(seed: u64, tag: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, tag, index))
}

/// Tags separating independent streams derived from one root seed.
pub mod tags {
    pub const FOLDS: u64 = 1;
    pub const NEGATIVES: u64 = 2;
    pub const ITEM_PARAMS: u64 = 3;
    pub const CONTEXT: u64 = 4;
    pub const GROUND_TRUTH: u64 = 5;
    pub const GAUSSMAX: u64 = 6;
    pub const SELECTION: u64 = 7;
    pub const RUN: u64 = 8;
    pub const JUDGE: u64 = 9;
    pub const LABELS: u64 = 10;
    pub const JACOBIAN: u64 = 11;
}
