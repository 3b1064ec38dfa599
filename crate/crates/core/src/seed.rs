//! Counter-based seed derivation.
//!
//! Every random stream in the crate is keyed by a `(master, stream, index)`
//! triple passed through [`mix`]. Streams never share state, so results do not
//! depend on how work is split across threads.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used for every stream.
pub type StreamRng = ChaCha8Rng;

/// Stream tags. Changing any of these changes every downstream result.
pub mod stream {
    pub const NOISE: u64 = 0x6e6f_6973;
    pub const CRITICAL: u64 = 0x6372_6974;
    pub const DATA: u64 = 0x6461_7461;
    pub const REPLICATION: u64 = 0x7265_706c;
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a master seed with two counters into a well-scrambled 64-bit seed.
///
/// `mix(m, a, b) = sm(sm(sm(m + G) ^ (a + G)) ^ (b + G))` where `sm` is the
/// SplitMix64 finalizer and `G` the 64-bit golden ratio constant.
pub fn mix(master: u64, a: u64, b: u64) -> u64 {
    let h = splitmix64(master.wrapping_add(GOLDEN));
    let h = splitmix64(h ^ a.wrapping_add(GOLDEN));
    splitmix64(h ^ b.wrapping_add(GOLDEN))
}

/// Generator for stream `(master, a, b)`.
pub fn rng_for(master: u64, a: u64, b: u64) -> StreamRng {
    StreamRng::seed_from_u64(mix(master, a, b))
}
