//! Seed derivation. Every random stream in the crate is a ChaCha8 generator
//! keyed by a `u64` derived from one root seed, so results never depend on
//! scheduling or worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for sub-stream `index` of `root`: `root ^ mix64(index)`.
pub fn derive_seed(root: u64, index: u64) -> u64 {
    root ^ mix64(index)
}

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn stream(root: u64, index: u64) -> Rng {
    rng_from_seed(derive_seed(root, index))
}
