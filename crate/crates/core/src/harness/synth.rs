//! Seeded Gaussian-blob classification data.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::rng::RngStream;
use crate::numerics::tensor::{norm, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SynthLayout {
    /// Class means spread on a sphere of radius `separation`.
    #[default]
    Blobs,
    /// Class `c` lives on a shell of radius `(c + 1)·separation`; not linearly separable.
    Radial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub n: usize,
    pub dim: usize,
    pub classes: usize,
    #[serde(default = "default_separation")]
    pub separation: f64,
    #[serde(default = "default_noise")]
    pub noise: f64,
    #[serde(default)]
    pub layout: SynthLayout,
}

fn default_separation() -> f64 {
    3.0
}

fn default_noise() -> f64 {
    1.0
}

impl SynthSpec {
    pub fn blobs(n: usize, dim: usize, classes: usize) -> Self {
        Self {
            n,
            dim,
            classes,
            separation: default_separation(),
            noise: default_noise(),
            layout: SynthLayout::Blobs,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.classes < 2 || self.n < self.classes || self.dim == 0 {
            return Err(Error::Config(format!(
                "synthetic data needs n ≥ classes ≥ 2 and dim ≥ 1 (n={}, classes={}, dim={})",
                self.n, self.classes, self.dim
            )));
        }
        if !(self.separation > 0.0) || !(self.noise >= 0.0) {
            return Err(Error::Config("separation must be positive and noise non-negative".into()));
        }
        Ok(())
    }
}

/// `[classes × dim]` blob centres; they depend on the seed only, never on `n`.
pub fn class_means(seed: u64, spec: &SynthSpec) -> Result<Tensor> {
    spec.validate()?;
    let mut rng = RngStream::new(seed).derive(0x6d65616e);
    let mut data = Vec::with_capacity(spec.classes * spec.dim);
    for _ in 0..spec.classes {
        let dir: Vec<f64> = (0..spec.dim).map(|_| rng.standard_normal()).collect();
        let n = norm(&dir);
        data.extend(dir.iter().map(|d| d / n * spec.separation));
    }
    Tensor::new(vec![spec.classes, spec.dim], data)
}

/// Labels cycle `0, 1, …, classes−1`; features are drawn around each class centre.
pub fn synth_dataset(seed: u64, spec: &SynthSpec) -> Result<(Tensor, Vec<usize>)> {
    let means = class_means(seed, spec)?;
    let mut rng = RngStream::new(seed).derive(0x73616d70);
    let labels: Vec<usize> = (0..spec.n).map(|i| i % spec.classes).collect();
    let mut data = Vec::with_capacity(spec.n * spec.dim);
    for &c in &labels {
        match spec.layout {
            SynthLayout::Blobs => {
                data.extend(means.row(c).iter().map(|m| m + spec.noise * rng.standard_normal()));
            }
            SynthLayout::Radial => {
                let dir: Vec<f64> = (0..spec.dim).map(|_| rng.standard_normal()).collect();
                let r = (c + 1) as f64 * spec.separation / norm(&dir);
                let jitter = 0.25 * spec.noise;
                data.extend(dir.iter().map(|d| d * r + jitter * rng.standard_normal()));
            }
        }
    }
    Ok((Tensor::new(vec![spec.n, spec.dim], data)?, labels))
}
