//! Seeding rules.
//!
//! Each run draws dataset indices and pseudo-outputs from two separate
//! ChaCha streams of the same seed, so optimizers that do not generate
//! pseudo-samples still see exactly the same sequence of data samples.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StdRng = ChaCha8Rng;

pub const DATA_STREAM: u64 = 0;
pub const PSEUDO_STREAM: u64 = 1;
pub const AUX_STREAM: u64 = 2;

pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Per-replicate seed derived from a root seed.
pub fn split_seed(root: u64, index: u64) -> u64 {
    root ^ index
}
