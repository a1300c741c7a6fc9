use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{FiddleError, Result};

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives the seed of the `index`-th child stream of `base`.
///
/// `derive_seed(base, i) = mix(mix(base) + (i + 1) * φ)` with `φ` the 64-bit golden-ratio
/// increment, so children of one base never collide and nesting is stable.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    mix64(mix64(base).wrapping_add(index.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15)))
}

/// Seeded, single-owner random stream (ChaCha8, a counter-mode generator).
#[derive(Debug, Clone)]
pub struct SeededRng {
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Independent child stream; does not advance `self`.
    pub fn child(seed: u64, index: u64) -> Self {
        Self::new(derive_seed(seed, index))
    }

    /// Uniform draw in `[a, b)`.
    pub fn uniform(&mut self, a: f64, b: f64) -> Result<f64> {
        if !(a < b) || !a.is_finite() || !b.is_finite() {
            return Err(FiddleError::InvalidArgument(format!(
                "uniform range [{a}, {b}) is empty or non-finite"
            )));
        }
        Ok(self.uniform_unchecked(a, b))
    }

    #[inline]
    pub(crate) fn uniform_unchecked(&mut self, a: f64, b: f64) -> f64 {
        let u: f64 = self.inner.gen();
        let v = a + (b - a) * u;
        // rounding can land exactly on b for wide ranges
        if v >= b {
            a.max(b - (b - a) * f64::EPSILON)
        } else {
            v
        }
    }

    pub fn normal(&mut self, mean: f64, sd: f64) -> Result<f64> {
        if !(sd >= 0.0) || !mean.is_finite() || !sd.is_finite() {
            return Err(FiddleError::InvalidArgument(format!(
                "normal(mean={mean}, sd={sd}) requires finite mean and sd >= 0"
            )));
        }
        if sd == 0.0 {
            return Ok(mean);
        }
        let z: f64 = StandardNormal.sample(&mut self.inner);
        Ok(mean + sd * z)
    }

    /// Returns `true` with probability `p`.
    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.inner.gen::<f64>() < p
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.inner);
    }

    /// Uniformly random `m`-subset of `0..n`, in draw order.
    pub fn sample_indices(&mut self, n: usize, m: usize) -> Vec<usize> {
        rand::seq::index::sample(&mut self.inner, n, m).into_vec()
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.gen()
    }
}
