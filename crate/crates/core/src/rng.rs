//! Seed derivation. Every random stream in the crate is keyed by
//! `(seed, purpose, index)` so that work can be split across threads without
//! changing results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(seed: u64, purpose: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(seed) ^ purpose) ^ index)
}

pub fn stream(seed: u64, purpose: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, purpose, index))
}

pub(crate) mod purpose {
    pub const BUILDINGS: u64 = 1;
    pub const SKY: u64 = 2;
    pub const CLOCK: u64 = 3;
    pub const TRACKING: u64 = 4;
    pub const MEASUREMENT: u64 = 5;
    pub const AOI_PRIOR: u64 = 6;
    pub const RF_TREE: u64 = 10;
    pub const SVM_FOLDS: u64 = 11;
    pub const MODEL_SEED: u64 = 12;
}
