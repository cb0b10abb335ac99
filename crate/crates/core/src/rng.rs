//! Seed splitting.
//!
//! Every random draw in the crate goes through a `ChaCha8Rng` seeded from a
//! `u64`. Independent streams are derived with a SplitMix64 finalizer so that
//! adding draws to one stream never shifts another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Named sub-streams of a trial seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    GroundTruth = 1,
    Design = 2,
    Noise = 3,
    GdInit = 4,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for sub-stream `index` of `seed`.
pub fn split_seed(seed: u64, index: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ splitmix64(index.wrapping_mul(0xD6E8_FEB8_6659_FD93)))
}

pub fn stream_seed(seed: u64, stream: Stream) -> u64 {
    split_seed(seed, stream as u64)
}

pub fn rng_from(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
