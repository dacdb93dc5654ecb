//! Splittable seeded random streams.
//!
//! A [`RngStream`] is an immutable key. Child streams are derived by mixing
//! the parent key with an index, so the draw produced for a given
//! `(seed, path)` never depends on how many other draws were taken before it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStream {
    key: u64,
}

// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self { key: mix(seed) }
    }

    /// Derive an independent child stream.
    pub fn split(&self, index: u64) -> Self {
        Self { key: mix(self.key ^ mix(index.wrapping_add(0x632B_E59B_D9B4_E019))) }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.key)
    }
}
