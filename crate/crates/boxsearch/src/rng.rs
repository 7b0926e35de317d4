//! Deterministic stream derivation.
//!
//! Every stochastic component draws from a ChaCha8 stream keyed by the run
//! seed plus a small label path (round index, purpose tag). Identical seeds
//! therefore reproduce identical byte streams regardless of thread timing
//! or platform.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes the seed and label path into a 256-bit ChaCha key.
pub fn derive_rng(seed: u64, labels: &[u64]) -> ChaCha8Rng {
    let mut state = seed ^ 0x51A5_C0DE_0000_0001;
    let _ = splitmix64(&mut state);
    for &label in labels {
        state ^= label.wrapping_mul(0xA076_1D64_78BD_642F);
        let _ = splitmix64(&mut state);
    }
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Stream labels, so callers never collide by accident.
pub mod stream {
    pub const GENERATOR: u64 = 1;
    pub const ROUNDING: u64 = 2;
    pub const EXPLORE_SCHEDULE: u64 = 3;
    pub const SKI_RENTAL: u64 = 4;
    pub const NA_ROUNDING: u64 = 5;
}
