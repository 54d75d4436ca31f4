//! Deterministic per-replication random streams.
//!
//! A stream is a ChaCha8 keystream. The 256-bit key is the SplitMix64
//! expansion of the master seed and the 64-bit ChaCha stream id is the
//! replication index, so replication `r` always sees the same numbers no
//! matter how many other replications run or in which order.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Random stream handed to every sampler.
pub type Stream = ChaCha8Rng;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream for replication `index` under `master_seed`.
pub fn derive_stream(master_seed: u64, index: u64) -> Stream {
    let mut state = master_seed;
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}
