//! Reproducible random substreams.
//!
//! Every random draw in the crate comes from a ChaCha8 stream selected by a
//! `(seed, stream_index)` pair. ChaCha is counter based, so two substreams never
//! share state and the draws of one stream do not depend on when, or on which
//! thread, any other stream is consumed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A deterministic random stream.
pub type Stream = ChaCha8Rng;

/// Stream purposes, mixed into [`stream_index`] so unrelated consumers of the
/// same seed never collide.
pub mod purpose {
    pub const MODEL_INIT: u64 = 1;
    pub const FIT_DIRECTIONS: u64 = 2;
    pub const SAMPLE_INIT: u64 = 3;
    pub const SAMPLE_DIRECTIONS: u64 = 4;
    pub const EVAL_DIRECTIONS: u64 = 5;
    pub const EM: u64 = 6;
    pub const SYNTH: u64 = 7;
    pub const GMM_SAMPLING: u64 = 8;
}

pub fn rng_substream(seed: u64, stream_index: u64) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_index);
    rng
}

/// Derives a stream index from a purpose tag and two counters (e.g. step and
/// direction).
pub fn stream_index(purpose: u64, major: u64, minor: u64) -> u64 {
    splitmix64(purpose ^ splitmix64(major ^ splitmix64(minor.wrapping_add(0x51_7c_c1_b7))))
}

/// Shorthand for `rng_substream(seed, stream_index(purpose, major, minor))`.
pub fn substream(seed: u64, purpose: u64, major: u64, minor: u64) -> Stream {
    rng_substream(seed, stream_index(purpose, major, minor))
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
