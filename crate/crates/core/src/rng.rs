//! Seeded random streams.
//!
//! Every stochastic stage draws from a ChaCha stream derived from the global
//! seed and a stage name, so stages stay reproducible independently of each
//! other.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StageRng = ChaCha8Rng;

fn fnv1a(name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Named substream of `seed`.
pub fn substream(seed: u64, name: &str) -> StageRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(fnv1a(name));
    rng
}

/// Substream further keyed by an index (epoch, example, ...).
pub fn indexed(seed: u64, name: &str, index: u64) -> StageRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    rng.set_stream(fnv1a(name));
    rng
}

/// Seed for stage `name`, drawn from the named substream of `seed`.
pub fn derive_seed(seed: u64, name: &str) -> u64 {
    use rand::RngCore;
    substream(seed, name).next_u64()
}
