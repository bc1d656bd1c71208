//! Deterministic RNG plumbing.
//!
//! Everything in this crate that consumes randomness is seeded, and
//! everything derived from a seed is derived *by index*, so results are
//! identical regardless of evaluation order or batching.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// The crate-standard seeded RNG.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// An RNG for the `index`-th item of a seeded family.
///
/// Uses the cipher's independent stream facility: every index yields a
/// statistically independent stream under the same key, and no index
/// depends on how many other indices were consumed.
pub fn rng_for_index(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// `n` sub-seeds derived from `seed`, by position.
pub fn derive_seeds(seed: u64, n: usize) -> Vec<u64> {
    let mut rng = rng_from_seed(seed);
    (0..n).map(|_| rng.gen()).collect()
}
