//! Counter-based stream derivation.
//!
//! Every random draw in a simulation is addressed by `(seed, trial, bin,
//! stage)`. The address is hashed into a ChaCha8 key, so a stream can be
//! reconstructed without replaying any other stream. Trials can therefore be
//! scheduled on any number of workers and still produce bit-identical output.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Stage label used for symbol-phase draws (channel stages use `0..n`).
pub const SYMBOL_STAGE: u64 = u64::MAX;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic generator for one `(seed, trial, bin, stage)` address.
pub fn stream(seed: u64, trial: u64, bin: u64, stage: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    let mut h = splitmix64(seed);
    for (chunk, word) in key.chunks_exact_mut(8).zip([trial, bin, stage, 0x5452_4d49_4d4f]) {
        h = splitmix64(h ^ word);
        chunk.copy_from_slice(&h.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Circularly symmetric complex Gaussian with `E|z|² = variance`.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let scale = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(scale * re, scale * im)
}
