//! Seeded random streams.
//!
//! Every stochastic operation draws from a ChaCha8 stream keyed by an
//! explicit `(seed, stream)` pair so results never depend on the platform
//! RNG or on thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Named stream identifiers, so unrelated consumers of one seed never overlap.
pub mod stream {
    pub const SYNTH: u64 = 1;
    pub const SPLIT: u64 = 2;
    pub const INIT: u64 = 3;
    pub const SHUFFLE: u64 = 4;
    pub const NOISE: u64 = 5;
}

pub fn seeded(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// A stream for the `index`-th item of a family, e.g. the shuffle of epoch `index`.
pub fn seeded_indexed(seed: u64, stream: u64, index: u64) -> Rng {
    let mixed = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(17);
    seeded(mixed, stream)
}
