//! Deterministic derivation of independent rng streams from one seed.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Stream `index` of `purpose` under `seed`. Distinct `(purpose, index)`
/// pairs give independent sequences.
pub fn derived_rng(seed: u64, purpose: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((purpose << 40) ^ index);
    rng
}

pub fn derived_seed(seed: u64, purpose: u64, index: u64) -> u64 {
    derived_rng(seed, purpose, index).next_u64()
}
