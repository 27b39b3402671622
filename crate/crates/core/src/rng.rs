//! Seeded random streams.
//!
//! Every stochastic quantity is drawn from a ChaCha8 generator whose seed is a
//! SplitMix64 hash of the master seed and a tag path such as
//! `[STREAM_NOISE, replication, row]`. Streams depend only on these values, so
//! results do not depend on thread count or scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const STREAM_TRUTH: u64 = 1;
pub const STREAM_NOISE: u64 = 2;
pub const STREAM_GP: u64 = 3;
pub const STREAM_CONTRAST: u64 = 4;
pub const STREAM_ENERGY: u64 = 5;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hashes a master seed and tag path into a child seed.
pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(seed), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

/// Generator for the stream identified by `(seed, tags)`.
pub fn stream(seed: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, tags))
}
