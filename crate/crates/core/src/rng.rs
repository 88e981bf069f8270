//! Seeded random streams.
//!
//! All stochastic code draws from ChaCha20, a counter-based generator. A run
//! is identified by `(seed, stream)`; parallel chains use their chain index as
//! the stream so results do not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub type SimRng = ChaCha20Rng;

/// Generator for `seed`, stream 0.
pub fn seeded(seed: u64) -> SimRng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// Independent generator for one chain of a seeded run.
pub fn stream(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Derive a child seed for a named sub-task of a run.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    // splitmix64 finaliser
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
