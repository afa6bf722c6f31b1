//! Seed derivation and random streams.
//!
//! Every stochastic routine takes a 64-bit seed and builds its own
//! ChaCha8 stream from it. Child seeds are derived by mixing the parent
//! seed with a sequence of integer labels, so a replicate's randomness
//! depends only on its labels and never on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Random stream type used throughout the crate.
pub type Stream = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable 64-bit hash of a seed and an ordered list of labels.
pub fn derive_seed(seed: u64, labels: &[u64]) -> u64 {
    let mut h = mix64(seed.wrapping_add(GOLDEN));
    for (i, &label) in labels.iter().enumerate() {
        h = mix64(h ^ mix64(label.wrapping_add(GOLDEN.wrapping_mul(i as u64 + 2))));
    }
    h
}

/// Builds the random stream for a seed.
pub fn stream(seed: u64) -> Stream {
    ChaCha8Rng::seed_from_u64(seed)
}
