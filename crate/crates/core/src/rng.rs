//! Deterministic random streams.
//!
//! Every consumer (environment, terrain, evaluation episode) gets its own
//! ChaCha stream keyed by `(seed, stream)`, so results never depend on the
//! order in which workers are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream identifiers are partitioned by purpose so two consumers never share one.
#[derive(Debug, Clone, Copy)]
pub enum Purpose {
    Env = 1,
    Terrain = 2,
    Eval = 3,
    Update = 4,
    Init = 5,
    Command = 6,
}

pub fn stream(seed: u64, purpose: Purpose, index: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, purpose as u64));
    rng.set_stream(index);
    rng
}

/// SplitMix64-style combination of two words.
pub fn mix(a: u64, b: u64) -> u64 {
    let mut z = a
        .wrapping_add(b.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
