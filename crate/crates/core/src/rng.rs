//! Per-replicate random streams.
//!
//! The ChaCha key is derived from `(seed, n)` and the replicate index selects
//! the stream, so every replicate has its own generator regardless of how
//! work is split across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator for replicate `replicate` of the experiment `(seed, n)`.
pub fn stream_rng(seed: u64, n: u64, replicate: u64) -> ChaCha8Rng {
    let mut tag = n.wrapping_mul(0xD1B5_4A32_D192_ED03);
    let mut state = seed ^ splitmix64(&mut tag);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(replicate);
    rng
}
