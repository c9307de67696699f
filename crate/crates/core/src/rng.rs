//! Seeded randomness.
//!
//! Every random draw in the crate comes from a [`ChaCha8Rng`] (from
//! `rand_chacha`), which produces the same stream on every platform. Child
//! seeds are derived from a root seed and a path of integer labels with the
//! SplitMix64 finalizer, so `(root, n, trial, user)` always maps to the same
//! stream regardless of evaluation order or thread count.

use rand::SeedableRng;
pub use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from `root` and a path of labels.
pub fn derive_seed(root: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(root), |acc, &label| splitmix64(acc ^ splitmix64(label)))
}

/// The generator used throughout the crate.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
