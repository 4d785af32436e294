//! Central finite-difference check of full-model gradients.

use super::model::Model;
use super::ops::softmax_xent;
use crate::error::Result;
use crate::numerics::tensor::Tensor;
use crate::Mode;

/// Denominator floor for relative errors, so coordinates whose true gradient
/// is (numerically) zero are judged on absolute error instead.
pub const REL_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct CoordCheck {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub coords: Vec<CoordCheck>,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.coords.iter().fold(0.0, |m, c| m.max(c.rel_err))
    }

    pub fn fraction_within(&self, tol: f64) -> f64 {
        let ok = self.coords.iter().filter(|c| c.rel_err <= tol).count();
        ok as f64 / self.coords.len().max(1) as f64
    }
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_FLOOR)
}

/// Train-mode cross-entropy of a throwaway copy of `model`.
fn loss_at(model: &Model, x: &Tensor, labels: &[usize]) -> Result<f64> {
    let mut m = model.clone();
    let (_, logits) = m.forward(x, Mode::Train)?;
    Ok(softmax_xent(&logits, labels)?.0)
}

/// Compares backprop against `(L(θ+h) − L(θ−h)) / 2h` for every trainable
/// coordinate. The model must not contain noise layers with `sigma > 0`.
pub fn check_gradients(model: &Model, x: &Tensor, labels: &[usize], h: f64) -> Result<GradCheckReport> {
    let mut m = model.clone();
    let (cache, logits) = m.forward(x, Mode::Train)?;
    let (_, grad_logits) = softmax_xent(&logits, labels)?;
    let grads = m.backward(&cache, &grad_logits)?;

    let names: Vec<String> = model.named_parameters().into_iter().map(|(n, _)| n).collect();
    let mut coords = Vec::new();
    for (k, name) in names.iter().enumerate() {
        let len = model.parameters()[k].len();
        for j in 0..len {
            let perturbed = |delta: f64| -> Result<f64> {
                let mut p = model.clone();
                p.parameters_mut()[k].data_mut()[j] += delta;
                p.commit()?;
                loss_at(&p, x, labels)
            };
            let numeric = (perturbed(h)? - perturbed(-h)?) / (2.0 * h);
            let analytic = grads.tensors[k].data()[j];
            coords.push(CoordCheck {
                param: name.clone(),
                index: j,
                analytic,
                numeric,
                rel_err: rel_err(analytic, numeric),
            });
        }
    }
    Ok(GradCheckReport { coords })
}
