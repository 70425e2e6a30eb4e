//! Seed derivation.
//!
//! Every random stream in a run is derived from one master seed and a stream
//! name, so adding a new consumer never shifts the draws of existing ones.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Child seed for the named stream: the stream name is folded byte by byte
/// through SplitMix64, starting from the master seed.
pub fn derive(master: u64, stream: &str) -> u64 {
    stream.bytes().fold(splitmix64(master), |acc, b| splitmix64(acc ^ u64::from(b)))
}

/// Child seed for an indexed stream (epochs, steps).
pub fn derive_index(master: u64, index: u64) -> u64 {
    splitmix64(splitmix64(master) ^ index.wrapping_mul(0xd6e8_feb8_6659_fd93))
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
