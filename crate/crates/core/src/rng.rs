//! Counter-based random streams.
//!
//! Every random draw in a chain comes from a ChaCha8 stream addressed by
//! `(seed, iteration, step, entity)`. The key is derived from the seed, the
//! ChaCha stream id encodes `(iteration, step)` and the block counter is
//! offset by the entity index, so no two addresses overlap and the result of
//! a parallel update never depends on thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Words reserved per entity inside one `(iteration, step)` stream.
const ENTITY_STRIDE_BITS: u32 = 32;
/// Maximum number of distinct step labels per iteration.
const STEP_SLOTS: u64 = 64;

pub type StreamRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamFactory {
    key: [u8; 32],
    seed: u64,
}

impl StreamFactory {
    pub fn new(seed: u64) -> Self {
        let mut key = [0u8; 32];
        let mut state = seed;
        for chunk in key.chunks_exact_mut(8) {
            state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
            chunk.copy_from_slice(&mix64(state).to_le_bytes());
        }
        Self { key, seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Stream addressed by an arbitrary 64-bit key instead of an iteration.
    pub fn keyed(&self, key: u64) -> StreamRng {
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(key);
        rng
    }

    /// Independent stream for one entity of one step of one iteration.
    pub fn stream(&self, iteration: u64, step: u64, entity: u64) -> StreamRng {
        debug_assert!(step < STEP_SLOTS);
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(iteration.wrapping_mul(STEP_SLOTS).wrapping_add(step));
        rng.set_word_pos(u128::from(entity) << ENTITY_STRIDE_BITS);
        rng
    }
}

/// Derive a child seed, e.g. one per simulation replicate or per cluster count.
pub fn derive_seed(seed: u64, label: &str, index: u64) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in label.as_bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    mix64(mix64(seed ^ h).wrapping_add(index.wrapping_mul(0xA076_1D64_78BD_642F)))
}

/// Full 64-bit hash of a byte string.
pub fn content_hash(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    mix64(h)
}

pub(crate) fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
