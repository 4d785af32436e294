//! Activations, the Gaussian noise layer and the softmax cross-entropy loss.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::rng::RngStream;
use crate::numerics::tensor::Tensor;
use crate::Mode;

/// Slope used for leaky ReLU when a config does not give one.
pub const DEFAULT_LEAKY_SLOPE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum Activation {
    Identity,
    Relu,
    LeakyRelu { slope: f64 },
}

impl Activation {
    pub fn leaky() -> Self {
        Activation::LeakyRelu { slope: DEFAULT_LEAKY_SLOPE }
    }

    fn slope(&self) -> Option<f64> {
        match *self {
            Activation::Identity => None,
            Activation::Relu => Some(0.0),
            Activation::LeakyRelu { slope } => Some(slope),
        }
    }

    pub fn forward(&self, t: &Tensor) -> Tensor {
        match self.slope() {
            None => t.clone(),
            Some(s) => leaky_relu(t, s),
        }
    }

    pub fn backward(&self, pre: &Tensor, grad: &Tensor) -> Result<Tensor> {
        match self.slope() {
            None => Ok(grad.clone()),
            Some(s) => leaky_relu_backward(pre, grad, s),
        }
    }
}

/// `max(t, slope·t)` for `slope ∈ [0, 1)`.
pub fn leaky_relu(t: &Tensor, slope: f64) -> Tensor {
    t.map(|x| if x > 0.0 { x } else { slope * x })
}

pub fn relu(t: &Tensor) -> Tensor {
    leaky_relu(t, 0.0)
}

/// Subgradient at 0 takes the negative-side slope.
pub fn leaky_relu_backward(pre: &Tensor, grad: &Tensor, slope: f64) -> Result<Tensor> {
    pre.zip_with(grad, |x, g| if x > 0.0 { g } else { slope * g })
}

/// Adds i.i.d. `N(0, sigma²)` in training; identity in evaluation.
pub fn gaussian_noise_layer(t: &Tensor, sigma: f64, rng: &mut RngStream, mode: Mode) -> Tensor {
    if mode == Mode::Eval || sigma == 0.0 {
        return t.clone();
    }
    let mut out = t.clone();
    for x in out.data_mut() {
        *x += sigma * rng.standard_normal();
    }
    out
}

/// Mean cross-entropy over the batch and its gradient `(softmax − onehot)/batch`.
pub fn softmax_xent(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    let (n, k) = logits.dims2()?;
    if labels.len() != n {
        return Err(Error::Dimension(format!(
            "{} labels for a batch of {n}",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::Value(format!("label {bad} out of range for {k} classes")));
    }
    let mut grad = logits.clone();
    let mut loss = 0.0;
    for (row, &label) in grad.data_mut().chunks_exact_mut(k).zip(labels) {
        let max = row.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
        let sum: f64 = row.iter().map(|x| (x - max).exp()).sum();
        let lse = max + sum.ln();
        loss += lse - row[label];
        for x in row.iter_mut() {
            *x = (*x - lse).exp() / n as f64;
        }
        row[label] -= 1.0 / n as f64;
    }
    Ok((loss / n as f64, grad))
}

/// Row-wise arg-max (first index on ties).
pub fn argmax_rows(logits: &Tensor) -> Vec<usize> {
    logits
        .rows()
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
                .0
        })
        .collect()
}
