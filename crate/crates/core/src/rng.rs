//! Counter-based random streams.
//!
//! Every proposal draws from its own ChaCha8 stream. The 256-bit key is
//! expanded from `(seed, iteration)` and the 64-bit stream id is the proposal
//! counter, so the random numbers consumed by proposal `c` of iteration `t`
//! do not depend on which worker evaluates it or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream ids at or above this value are reserved for control-phase draws
/// (reservoir sampling, resampling) so they never collide with proposals.
pub const CONTROL_STREAM_BASE: u64 = 1 << 62;

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

fn key_for(seed: u64, iteration: u64) -> [u8; 32] {
    let mut key = [0u8; 32];
    let mut state = splitmix64(seed) ^ splitmix64(iteration.wrapping_add(0x5851_f42d_4c95_7f2d));
    for chunk in key.chunks_exact_mut(8) {
        state = splitmix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    key
}

/// Random stream for proposal `counter` of `iteration` in the run seeded by `seed`.
pub fn stream(seed: u64, iteration: u64, counter: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::from_seed(key_for(seed, iteration));
    rng.set_stream(counter);
    rng
}

/// Stream reserved for control-phase randomness of an iteration.
pub fn control_stream(seed: u64, iteration: u64, purpose: u64) -> StreamRng {
    stream(seed, iteration, CONTROL_STREAM_BASE + purpose)
}
