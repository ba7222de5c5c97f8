//! Seeded, counter-based random streams.
//!
//! Every parallel work unit (bootstrap replicate, hedging path, ...) draws from
//! its own ChaCha stream selected by index, so results do not depend on how
//! work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent sub-stream `index` of the master seed.
pub fn substream(master_seed: u64, index: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index.wrapping_add(1));
    rng
}

/// Derive a child seed for a nested component (e.g. the EM initialization of
/// bootstrap replicate `index`).
pub fn child_seed(master_seed: u64, index: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = master_seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
