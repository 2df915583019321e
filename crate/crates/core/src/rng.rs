//! Deterministic derivation of independent RNG streams.
//!
//! Parallel work never shares a generator: each unit of work (a label layer
//! and colour, an atom, a replication) gets its own stream derived from a key
//! and a tag path, so results do not depend on the thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a key with a tag path into a new 64-bit key.
pub fn derive_key(key: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(splitmix64(key), |h, &t| splitmix64(h ^ splitmix64(t.wrapping_add(0x5851_F42D))))
}

/// Generator for the stream identified by `(key, tags)`.
pub fn stream(key: u64, tags: &[u64]) -> StreamRng {
    ChaCha8Rng::seed_from_u64(derive_key(key, tags))
}

/// Top-level generator for a user seed.
pub fn seeded(seed: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(seed)
}
