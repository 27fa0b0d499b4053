//! Seeded random streams.
//!
//! All randomness comes from ChaCha8 generators. A run has a single master
//! seed; every consumer derives its own seed from the master seed plus a path
//! of integers (trial index, stream id, ...) through SplitMix64, so results do
//! not depend on the order in which trials are executed.

use crate::C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type SimRng = ChaCha8Rng;

/// Stream identifiers for per-trial seed derivation.
pub mod stream {
    pub const CHANNEL: u64 = 1;
    pub const BITS: u64 = 2;
    pub const NOISE: u64 = 3;
    pub const INIT: u64 = 4;
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds `path` into `master` one element at a time.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(master), |acc, &p| {
        splitmix64(acc ^ splitmix64(p))
    })
}

pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Draws from CN(0, variance): real and imaginary parts are independent
/// N(0, variance / 2).
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> C64 {
    let sd = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(sd * re, sd * im)
}

pub fn random_bits(n: usize, seed: u64) -> Vec<u8> {
    let mut rng = rng_from_seed(seed);
    (0..n).map(|_| rng.random::<bool>() as u8).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_seeds_differ_by_path() {
        let a = derive_seed(1, &[0, stream::CHANNEL]);
        let b = derive_seed(1, &[1, stream::CHANNEL]);
        let c = derive_seed(1, &[0, stream::NOISE]);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, derive_seed(1, &[0, stream::CHANNEL]));
    }

    #[test]
    fn complex_gaussian_variance() {
        let mut rng = rng_from_seed(11);
        let n = 200_000;
        let (mut re2, mut im2) = (0.0, 0.0);
        for _ in 0..n {
            let z = complex_gaussian(&mut rng, 2.0);
            re2 += z.re * z.re;
            im2 += z.im * z.im;
        }
        assert!((re2 / n as f64 - 1.0).abs() < 0.02);
        assert!((im2 / n as f64 - 1.0).abs() < 0.02);
    }
}
