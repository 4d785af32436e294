//! Seeded, counter-addressable random stream.
//!
//! The stream is ChaCha8 keyed by `seed` (via `SeedableRng::seed_from_u64`);
//! `counter` is the ChaCha word position, so `(seed, counter)` names an exact
//! point in the sequence and can be restored on any platform. Gaussian draws use
//! the ziggurat sampler of `rand_distr::StandardNormal`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self::at(seed, 0)
    }

    /// Restores the stream at a given word position.
    pub fn at(seed: u64, counter: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_word_pos(counter as u128);
        Self { seed, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn counter(&self) -> u64 {
        self.inner.get_word_pos() as u64
    }

    /// Independent child stream; used to give each model, dataset or grid cell
    /// its own sequence derived from one experiment seed.
    pub fn derive(&self, tag: u64) -> RngStream {
        let mixed = self
            .seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .rotate_left(17)
            ^ tag.wrapping_mul(0xBF58_476D_1CE4_E5B9);
        RngStream::new(mixed)
    }

    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    /// Fisher-Yates shuffle driven by this stream.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

/// I.i.d. `N(mean, std²)` tensor. `std == 0` yields a constant tensor and does
/// not advance the stream.
pub fn sample_normal(rng: &mut RngStream, shape: &[usize], mean: f64, std: f64) -> Tensor {
    assert!(std >= 0.0, "std must be non-negative");
    if std == 0.0 {
        return Tensor::full(shape, mean);
    }
    let mut t = Tensor::zeros(shape);
    for x in t.data_mut() {
        *x = mean + std * rng.standard_normal();
    }
    t
}
