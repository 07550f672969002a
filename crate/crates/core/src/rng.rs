//! Reproducible random substreams.
//!
//! Every random quantity in the engine is drawn from a ChaCha8 stream that is
//! fully determined by `(seed, purpose, stream index)`. ChaCha is counter
//! based, so distinct stream indices give independent sequences and a path
//! can be regenerated in isolation, in any order, on any worker.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a substream is used for. Each purpose gets its own key so that, e.g.,
/// the factor normals of path 7 never overlap the default uniforms of path 7.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Factors = 1,
    Default = 2,
    ReferenceDefault = 3,
    Inner = 4,
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Returns the generator for `(seed, purpose, stream)`.
pub fn substream(seed: u64, purpose: Purpose, stream: u64) -> ChaCha8Rng {
    let key = mix64(seed ^ mix64(purpose as u64));
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(stream);
    rng
}

/// Packs a nested-simulation coordinate into one stream index.
///
/// Layout: 32 bits outer path, 12 bits observation, 20 bits inner path.
pub fn nested_stream(outer: u64, observation: u64, inner: u64) -> Option<u64> {
    if outer >= 1 << 32 || observation >= 1 << 12 || inner >= 1 << 20 {
        return None;
    }
    Some((outer << 32) | (observation << 20) | inner)
}
