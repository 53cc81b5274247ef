//! Deterministic seed derivation.
//!
//! All randomness in the crate flows from a master seed through
//! [`derive`], so results are identical whether loops run serially or
//! in parallel and regardless of iteration order.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Streams used as the first tag when deriving seeds, so different
/// consumers of the same master seed never collide.
pub mod stream {
    pub const PF_DESIGN: u64 = 0x01;
    pub const TRAJECTORY: u64 = 0x02;
    pub const BOOTSTRAP: u64 = 0x03;
    pub const CRUDE_DESIGN: u64 = 0x04;
    pub const CRUDE_TRAJECTORY: u64 = 0x05;
    pub const VALIDATION: u64 = 0x06;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mix a master seed with a sequence of tags into a new seed.
pub fn derive(master: u64, tags: &[u64]) -> u64 {
    let mut state = splitmix64(master);
    for &t in tags {
        state = splitmix64(state ^ splitmix64(t));
    }
    state
}

/// RNG seeded from a derived seed.
pub fn rng(master: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(master, tags))
}

/// RNG seeded directly from a seed value.
pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
