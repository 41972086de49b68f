//! Seed derivation. Every random decision in the crate draws from a ChaCha
//! stream addressed by `(seed, stream index)`, so results never depend on
//! execution order or thread count.

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Generator for substream `index` of `seed`.
pub fn stream(seed: u64, index: u64) -> Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(index);
    r
}

/// A child seed for substream `index`; distinct indices give independent children.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    stream(seed, index).next_u64()
}
