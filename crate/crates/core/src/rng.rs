//! Deterministic RNG streams.
//!
//! Every random draw in a simulation comes from a stream keyed by
//! `(master seed, stream id, index)`, so the order in which clients are
//! scheduled never changes a result.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream id reserved for participant sampling.
pub const PARTICIPATION_STREAM: u64 = u64::MAX;
/// Stream id reserved for model initialisation.
pub const INIT_STREAM: u64 = u64::MAX - 1;
/// Stream id reserved for data shuffling and splitting.
pub const DATA_STREAM: u64 = u64::MAX - 2;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a master seed with a stream id and an index into one 64-bit seed.
pub fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    splitmix(splitmix(splitmix(seed) ^ stream) ^ index)
}

pub fn stream(seed: u64, stream: u64, index: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, stream, index))
}
