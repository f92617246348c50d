//! Seeded random streams.
//!
//! Every random quantity in the crate comes from a ChaCha20 generator
//! (256-bit key, 64-bit stream id, 64-bit block counter). A generator is
//! keyed by `seed_from_u64(seed)` and then moved to a fixed stream id that
//! names its purpose, so the weights of a model never share a stream with
//! its bias, its permutation, the shot sampler or the training shuffle.
//! Changing one consumer therefore never perturbs the numbers another
//! consumer sees for the same seed.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub type Rng = ChaCha20Rng;

/// Stream ids. Values are part of the reproducibility contract.
pub mod stream {
    pub const WEIGHTS: u64 = 1;
    pub const BIAS: u64 = 2;
    pub const PERMUTATION: u64 = 3;
    pub const SHOTS: u64 = 4;
    pub const SHUFFLE: u64 = 5;
    pub const SUBSET: u64 = 6;
    pub const SPECTRAL: u64 = 7;
    pub const PAIRS: u64 = 8;
    pub const BERNOULLI: u64 = 9;
    pub const TEST_DATA: u64 = 10;
}

pub fn seeded(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Derives a child seed, e.g. one per sample or per trial, with a
/// splitmix64 finalizer over `(seed, index)`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
