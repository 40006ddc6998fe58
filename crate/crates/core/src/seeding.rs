//! Seed derivation.
//!
//! All randomness in a run is keyed from a single 64-bit master seed. A child
//! stream is named by a path of integer labels: `derive(seed, &[a, b, c])`
//! folds each label into the state with `state = splitmix64(state ^ splitmix64(label))`.
//! The first label is usually one of the [`streams`] tags so that independent
//! stages (data generation, Monte-Carlo critics, the quadratic study) never
//! share a stream even when their remaining indices coincide.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags for the first element of a derivation path.
pub mod streams {
    pub const DATASET: u64 = 0x01;
    pub const MONTE_CARLO: u64 = 0x02;
    pub const EPISODE: u64 = 0x03;
    pub const QUADRATIC: u64 = 0x04;
    pub const GAME: u64 = 0x05;
    pub const AUDIT: u64 = 0x06;
    pub const VERIFY: u64 = 0x07;
}

/// One round of the SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive(seed: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(seed), |state, &label| splitmix64(state ^ splitmix64(label)))
}

/// A ChaCha8 generator for the stream named by `path`.
pub fn rng(seed: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, path))
}
