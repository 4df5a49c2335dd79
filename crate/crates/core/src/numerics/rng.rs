//! Seeded, stream-splittable random number generation.
//!
//! Built on PCG-64: identical `(seed, stream)` pairs reproduce identical
//! sequences on every platform, and distinct streams are statistically
//! independent, so parallel workers can each derive their own generator.
//! The Gaussian transform is the plain Box-Muller cosine branch, two
//! uniforms per draw, frozen by the golden fixture under `tests/data/`.

use rand_core::RngCore;
use rand_pcg::Pcg64;

use crate::error::{Error, Result};

/// Deterministic random generator with an explicit stream id.
#[derive(Clone, Debug)]
pub struct SeededRng {
    seed: u64,
    stream: u64,
    inner: Pcg64,
}

impl SeededRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let inner = Pcg64::new(
            (seed as u128).wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ ((seed as u128) << 64),
            stream as u128,
        );
        Self {
            seed,
            stream,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Fresh generator on an independent stream derived from `tag`.
    ///
    /// The derivation is a fixed bijective mix of the parent stream and the
    /// tag, so derived streams never depend on how much the parent has been
    /// consumed.
    pub fn derive(&self, tag: u64) -> SeededRng {
        SeededRng::new(self.seed, splitmix64(self.stream ^ splitmix64(tag)))
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform draw in `[0, 1)` with 53 random mantissa bits.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Unbiased uniform integer in `[0, bound)` via rejection sampling.
    pub fn uniform_below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0, "uniform_below requires a positive bound");
        let threshold = bound.wrapping_neg() % bound;
        loop {
            let r = self.next_u64();
            if r >= threshold {
                return r % bound;
            }
        }
    }

    /// Uniform integer in the inclusive range `[lo, hi]`.
    pub fn uniform_range(&mut self, lo: u64, hi: u64) -> u64 {
        assert!(lo <= hi);
        lo + self.uniform_below(hi - lo + 1)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Standard-normal draw: Box-Muller, cosine branch, two uniforms.
    #[inline]
    pub fn standard_normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform(); // (0, 1]
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.uniform_below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}

/// Draw from `N(mean, std²)`.
pub fn gaussian_sample(rng: &mut SeededRng, mean: f64, std: f64) -> Result<f64> {
    if !(std > 0.0) {
        return Err(Error::invalid(format!(
            "gaussian_sample requires std > 0, got {std}"
        )));
    }
    Ok(mean + std * rng.standard_normal())
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}
