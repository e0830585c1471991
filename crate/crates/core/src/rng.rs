//! Reproducible random streams.
//!
//! Every random draw in the crate comes from ChaCha8 keyed by the user seed,
//! with the 64-bit stream selector set to a work-item index (Monte Carlo
//! chunk, jitter trial). Results therefore do not depend on how work items
//! are scheduled across threads.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Generator for work item `index` under `seed`.
pub fn stream(seed: u64, index: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// A child seed for work item `index`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    stream(seed, index).next_u64()
}
