//! Reproducible random streams.
//!
//! Every consumer draws from a ChaCha8 generator keyed by the master seed and
//! a `(domain, index)` pair, so results do not depend on how work is split
//! across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream domains. Keeping them distinct stops e.g. the codebook of trial 3
/// from sharing randomness with the channel noise of trial 3.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Codebook = 1,
    Trial = 2,
    Search = 3,
}

/// Generator for stream `index` of `domain` under `seed`.
pub fn stream(seed: u64, domain: Domain, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (domain as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(index);
    rng
}
