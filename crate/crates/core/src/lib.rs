//! Weight normalization for small dense and convolutional networks.
//!
//! Each weight vector is reparameterized as `w = g · v/‖v‖`, decoupling its
//! length `g` from its direction `v`. The crate provides:
//!
//! - [`numerics`]: a deterministic `f64` tensor kernel (matmul, conv, stats,
//!   ZCA whitening, Jacobi eigen-solver, seeded sampling).
//! - [`weight_norm`]: composition, both forms of the `v`-gradient, the
//!   log-scale variant and the norm-growth factor.
//! - [`normalization`]: batch normalization, mean-only batch normalization and
//!   data-dependent initialization of `(g, b)`.
//! - [`network`]: dense/conv models under five parameterizations with exact
//!   backprop and a finite-difference checker.
//! - [`optim`]: SGD, momentum, Adam, Adamax, parameter EMA and the two-phase
//!   learning-rate schedule.
//! - [`analysis`]: gradient covariance, its projected form, dominant
//!   eigenvector alignment and `‖v‖` traces.
//! - [`harness`]: IDX/synthetic datasets, JSON experiment configs, training
//!   runs, the five-way comparison grid, CSV output and checkpoints.
//!
//! ```
//! use weightnorm::network::{build_model, Activation, LayerSpec, NormMode};
//! use weightnorm::numerics::{sample_normal, RngStream};
//! use weightnorm::Mode;
//!
//! let specs = [
//!     LayerSpec::dense(4, 8, NormMode::WeightNorm, Activation::Relu),
//!     LayerSpec::dense(8, 3, NormMode::WeightNorm, Activation::Identity),
//! ];
//! let mut model = build_model(&[4], &specs, RngStream::new(0)).unwrap();
//! let x = sample_normal(&mut RngStream::new(1), &[16, 4], 0.0, 1.0);
//! model.data_dependent_init(&x, 1e-10).unwrap();
//! let (_, logits) = model.forward(&x, Mode::Train).unwrap();
//! assert_eq!(logits.shape(), &[16, 3]);
//! ```

pub mod analysis;
pub mod error;
pub mod harness;
pub mod network;
pub mod normalization;
pub mod numerics;
pub mod optim;
pub mod weight_norm;

pub use error::{Error, Result};
pub use numerics::Tensor;

/// Training uses minibatch statistics and noise; evaluation uses running
/// statistics and is side-effect free.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Train,
    Eval,
}
