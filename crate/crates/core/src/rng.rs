//! Seeded random number generation.
//!
//! Every random choice in the crate (initialization, crops, shuffles, SNR
//! draws, noise offsets) goes through [`SeededRng`], a ChaCha20 stream
//! generator. ChaCha is counter-based and platform independent, so a seed
//! reproduces the same bits everywhere.

use rand::SeedableRng;
pub use rand_chacha::ChaCha20Rng as SeededRng;

/// Algorithm name written into file headers that depend on it.
pub const RNG_ALGORITHM: &str = "chacha20";

pub fn seeded(seed: u64) -> SeededRng {
    SeededRng::seed_from_u64(seed)
}

/// Derives an independent stream for `(seed, stream)`.
pub fn seeded_stream(seed: u64, stream: u64) -> SeededRng {
    let mut rng = SeededRng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
