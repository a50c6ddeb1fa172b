//! Deterministic named RNG streams.
//!
//! Every source of randomness in a run is a ChaCha stream keyed by the run
//! seed plus a list of tags (purpose constant, client id, round index, ...).
//! Two runs with the same seed draw identical streams, and streams with
//! different tags are statistically independent. This is what makes paired
//! shadow runs possible: the attack-free twin consumes the same data-path
//! streams while the attack-path streams simply go unused.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Purpose tags for stream derivation. Values are arbitrary but frozen:
/// changing them changes every derived stream.
pub mod tags {
    pub const INIT: u64 = 0x01;
    pub const PARTITION: u64 = 0x02;
    pub const BATCH: u64 = 0x03;
    pub const ATTACK: u64 = 0x04;
    pub const CRAFT: u64 = 0x05;
    pub const SUBSET: u64 = 0x06;
    pub const DATASET: u64 = 0x07;
    pub const MALICIOUS: u64 = 0x08;
    pub const SAMPLING: u64 = 0x09;
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive an independent ChaCha stream from `seed` and a tag path.
pub fn stream(seed: u64, path: &[u64]) -> ChaCha12Rng {
    let mut state = seed ^ 0x6A09_E667_F3BC_C908;
    for &tag in path {
        state ^= splitmix64(&mut state) ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    }
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha12Rng::from_seed(key)
}
