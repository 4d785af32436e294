//! Batch normalization, mean-only batch normalization and data-dependent
//! initialization of `(g, b)`.
//!
//! All operations take pre-activations laid out as `[rows × features]`; for a
//! convolution the rows are every (example, spatial position) pair and the
//! features are output channels. Minibatch statistics use the population
//! (1/n) variance.

use crate::error::{Error, Result};
use crate::numerics::stats::{column_mean, column_sum};
use crate::numerics::tensor::{dot, Tensor};
use crate::weight_norm::WeightNormParam;
use crate::Mode;

/// Added to the variance under the square root in batch normalization.
pub const BN_EPS: f64 = 1e-6;
/// Added to σ[t] in the data-dependent initializer.
pub const INIT_EPS: f64 = 1e-10;
pub const DEFAULT_MOMENTUM: f64 = 0.9;

fn check_momentum(momentum: f64) -> Result<()> {
    if !(momentum > 0.0 && momentum < 1.0) {
        return Err(Error::Value(format!("momentum must lie in (0, 1), got {momentum}")));
    }
    Ok(())
}

fn ema(running: &mut [f64], batch: &[f64], momentum: f64, first: bool) {
    for (r, b) in running.iter_mut().zip(batch) {
        *r = if first { *b } else { momentum * *r + (1.0 - momentum) * b };
    }
}

fn check_features(t: &Tensor, features: usize) -> Result<usize> {
    let (n, d) = t.dims2()?;
    if d != features {
        return Err(Error::Dimension(format!(
            "expected {features} features, got {d}"
        )));
    }
    Ok(n)
}

#[derive(Debug, Clone)]
pub struct BatchNormState {
    pub gamma: Tensor,
    pub beta: Tensor,
    running_mean: Tensor,
    running_var: Tensor,
    momentum: f64,
    eps: f64,
    seen_batch: bool,
}

impl BatchNormState {
    /// `gamma = 1`, `beta = 0`. `eps = 0` selects the exact (unregularized) path.
    pub fn new(features: usize, momentum: f64, eps: f64) -> Result<Self> {
        check_momentum(momentum)?;
        if !(eps >= 0.0) {
            return Err(Error::Value(format!("eps must be non-negative, got {eps}")));
        }
        Ok(Self {
            gamma: Tensor::full(&[features], 1.0),
            beta: Tensor::zeros(&[features]),
            running_mean: Tensor::zeros(&[features]),
            running_var: Tensor::full(&[features], 1.0),
            momentum,
            eps,
            seen_batch: false,
        })
    }

    pub fn features(&self) -> usize {
        self.gamma.len()
    }

    pub fn running_mean(&self) -> &Tensor {
        &self.running_mean
    }

    pub fn running_var(&self) -> &Tensor {
        &self.running_var
    }

    pub(crate) fn running_mut(&mut self) -> (&mut Tensor, &mut Tensor) {
        self.seen_batch = true;
        (&mut self.running_mean, &mut self.running_var)
    }

    pub fn momentum(&self) -> f64 {
        self.momentum
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }
}

/// What [`batchnorm_backward`] needs from the forward pass.
#[derive(Debug, Clone)]
pub struct BatchNormCache {
    mode: Mode,
    xhat: Tensor,
    inv_std: Vec<f64>,
    gamma: Vec<f64>,
}

pub fn batchnorm_forward(
    t: &Tensor,
    state: &mut BatchNormState,
    mode: Mode,
) -> Result<(Tensor, BatchNormCache)> {
    let n = check_features(t, state.features())?;
    let d = state.features();
    let (mean, var) = match mode {
        Mode::Train => {
            if n < 2 {
                return Err(Error::BatchSize { got: n, need: 2 });
            }
            let mean = column_mean(t)?;
            let mut var = vec![0.0; d];
            for row in t.rows() {
                for ((v, x), m) in var.iter_mut().zip(row).zip(&mean) {
                    *v += (x - m) * (x - m);
                }
            }
            var.iter_mut().for_each(|v| *v /= n as f64);
            let first = !state.seen_batch;
            ema(state.running_mean.data_mut(), &mean, state.momentum, first);
            ema(state.running_var.data_mut(), &var, state.momentum, first);
            state.seen_batch = true;
            (mean, var)
        }
        Mode::Eval => (
            state.running_mean.data().to_vec(),
            state.running_var.data().to_vec(),
        ),
    };
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + state.eps).sqrt()).collect();
    let mut xhat = t.clone();
    let mut y = t.clone();
    for (xr, yr) in xhat
        .data_mut()
        .chunks_exact_mut(d)
        .zip(y.data_mut().chunks_exact_mut(d))
    {
        for j in 0..d {
            let xh = (xr[j] - mean[j]) * inv_std[j];
            xr[j] = xh;
            yr[j] = state.gamma.data()[j] * xh + state.beta.data()[j];
        }
    }
    let cache = BatchNormCache {
        mode,
        xhat,
        inv_std,
        gamma: state.gamma.data().to_vec(),
    };
    Ok((y, cache))
}

/// Exact gradients of the train-mode forward: `(∇t, ∇γ, ∇β)`.
pub fn batchnorm_backward(grad_out: &Tensor, cache: &BatchNormCache) -> Result<(Tensor, Tensor, Tensor)> {
    if cache.mode != Mode::Train {
        return Err(Error::Contract(
            "batchnorm_backward needs a train-mode forward cache".into(),
        ));
    }
    grad_out.check_same_shape(&cache.xhat)?;
    let (n, d) = grad_out.dims2()?;
    let mut grad_beta = vec![0.0; d];
    let mut grad_gamma = vec![0.0; d];
    for (gr, xr) in grad_out.rows().zip(cache.xhat.rows()) {
        for j in 0..d {
            grad_beta[j] += gr[j];
            grad_gamma[j] += gr[j] * xr[j];
        }
    }
    // ∇t = γ/σ · (∇y − mean(∇y) − x̂ · mean(∇y ⊙ x̂))
    let mut grad_t = grad_out.clone();
    for (gt, xr) in grad_t.data_mut().chunks_exact_mut(d).zip(cache.xhat.rows()) {
        for j in 0..d {
            let m1 = grad_beta[j] / n as f64;
            let m2 = grad_gamma[j] / n as f64;
            gt[j] = cache.gamma[j] * cache.inv_std[j] * (gt[j] - m1 - xr[j] * m2);
        }
    }
    Ok((grad_t, Tensor::vector(grad_gamma), Tensor::vector(grad_beta)))
}

#[derive(Debug, Clone)]
pub struct MeanOnlyBNState {
    running_mean: Tensor,
    momentum: f64,
    seen_batch: bool,
}

impl MeanOnlyBNState {
    pub fn new(features: usize, momentum: f64) -> Result<Self> {
        check_momentum(momentum)?;
        Ok(Self {
            running_mean: Tensor::zeros(&[features]),
            momentum,
            seen_batch: false,
        })
    }

    pub fn features(&self) -> usize {
        self.running_mean.len()
    }

    /// Running mean of `t` (before the bias is added).
    pub fn running_mean(&self) -> &Tensor {
        &self.running_mean
    }

    pub(crate) fn running_mut(&mut self) -> &mut Tensor {
        self.seen_batch = true;
        &mut self.running_mean
    }
}

/// `t̃ = t − μ[t] + b`; eval mode substitutes the running mean for `μ[t]`.
pub fn meanonly_forward(t: &Tensor, b: &Tensor, state: &mut MeanOnlyBNState, mode: Mode) -> Result<Tensor> {
    check_features(t, state.features())?;
    if b.len() != state.features() {
        return Err(Error::Dimension("bias length does not match features".into()));
    }
    let mean = match mode {
        Mode::Train => {
            let mean = column_mean(t)?;
            let first = !state.seen_batch;
            ema(state.running_mean.data_mut(), &mean, state.momentum, first);
            state.seen_batch = true;
            mean
        }
        Mode::Eval => state.running_mean.data().to_vec(),
    };
    let d = state.features();
    let mut out = t.clone();
    for row in out.data_mut().chunks_exact_mut(d) {
        for j in 0..d {
            row[j] = row[j] - mean[j] + b.data()[j];
        }
    }
    Ok(out)
}

/// `(∇t, ∇b)` with `∇t = ∇t̃ − μ[∇t̃]` and `∇b = Σ ∇t̃`.
pub fn meanonly_backward(grad_tilde: &Tensor) -> Result<(Tensor, Tensor)> {
    let (_, d) = grad_tilde.dims2()?;
    let sum = column_sum(grad_tilde)?;
    let mean = column_mean(grad_tilde)?;
    let mut grad_t = grad_tilde.clone();
    for row in grad_t.data_mut().chunks_exact_mut(d) {
        for j in 0..d {
            row[j] -= mean[j];
        }
    }
    Ok((grad_t, Tensor::vector(sum)))
}

/// Scales and biases assigned by data-dependent initialization, with the
/// statistics of the resulting pre-activations on the initialization batch.
#[derive(Debug, Clone)]
pub struct InitReport {
    pub g_init: Tensor,
    pub b_init: Tensor,
    pub post_mean: Tensor,
    pub post_std: Tensor,
}

/// `g ← 1/(σ[t]+eps)`, `b ← −μ[t]/(σ[t]+eps)` from normalized pre-activations
/// `t = v·x/‖v‖` laid out as `[rows × units]`.
pub fn init_scale_bias(t: &Tensor, eps: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let (n, d) = t.dims2()?;
    if n < 2 {
        return Err(Error::BatchSize { got: n, need: 2 });
    }
    let mean = column_mean(t)?;
    let mut var = vec![0.0; d];
    for row in t.rows() {
        for ((v, x), m) in var.iter_mut().zip(row).zip(&mean) {
            *v += (x - m) * (x - m);
        }
    }
    let mut g = Vec::with_capacity(d);
    let mut b = Vec::with_capacity(d);
    for j in 0..d {
        let sigma = (var[j] / n as f64).sqrt();
        g.push(1.0 / (sigma + eps));
        b.push(-mean[j] / (sigma + eps));
    }
    Ok((g, b))
}

/// Per-column mean and population std.
pub(crate) fn column_stats(t: &Tensor) -> Result<(Tensor, Tensor)> {
    crate::numerics::stats::mean_std(t, &[0])
}

/// Data-dependent initialization of one weight-normalized dense layer from an
/// input batch `x: [batch × fan_in]`; sets `g` and `bias` in place.
pub fn data_dependent_init(
    param: &mut WeightNormParam,
    bias: &mut Tensor,
    x: &Tensor,
    eps: f64,
) -> Result<InitReport> {
    let (n, fan) = x.dims2()?;
    if fan != param.fan_in() {
        return Err(Error::Dimension(format!(
            "layer fan-in {} but batch has {fan} features",
            param.fan_in()
        )));
    }
    if bias.len() != param.units() {
        return Err(Error::Dimension("bias length does not match units".into()));
    }
    if n < 2 {
        return Err(Error::BatchSize { got: n, need: 2 });
    }
    let units = param.units();
    let mut t = Tensor::zeros(&[n, units]);
    for (row_x, row_t) in x.rows().zip(t.data_mut().chunks_exact_mut(units)) {
        for (u, (vrow, nv)) in param.v().rows().zip(param.norms()).enumerate() {
            row_t[u] = dot(vrow, row_x) / nv;
        }
    }
    let (g, b) = init_scale_bias(&t, eps)?;
    param.set_g(&g)?;
    bias.data_mut().copy_from_slice(&b);

    let w = param.compose().w;
    let mut pre = Tensor::zeros(&[n, units]);
    for (row_x, row_p) in x.rows().zip(pre.data_mut().chunks_exact_mut(units)) {
        for (u, wrow) in w.rows().enumerate() {
            row_p[u] = dot(wrow, row_x) + b[u];
        }
    }
    let (post_mean, post_std) = column_stats(&pre)?;
    Ok(InitReport {
        g_init: Tensor::vector(g),
        b_init: Tensor::vector(b),
        post_mean,
        post_std,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rng::{sample_normal, RngStream};

    fn col(values: &[f64]) -> Tensor {
        Tensor::new(vec![values.len(), 1], values.to_vec()).unwrap()
    }

    #[test]
    fn batchnorm_hand_example() {
        let mut st = BatchNormState::new(1, 0.9, BN_EPS).unwrap();
        let (y, _) = batchnorm_forward(&col(&[1.0, 3.0]), &mut st, Mode::Train).unwrap();
        assert!((y.data()[0] + 1.0).abs() < 1e-6);
        assert!((y.data()[1] - 1.0).abs() < 1e-6);
        // running stats start from the first batch
        assert_eq!(st.running_mean().data(), &[2.0]);
        assert_eq!(st.running_var().data(), &[1.0]);
    }

    #[test]
    fn batchnorm_constant_column_is_zero() {
        let mut st = BatchNormState::new(1, 0.9, BN_EPS).unwrap();
        let (y, _) = batchnorm_forward(&col(&[4.0; 5]), &mut st, Mode::Train).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn batchnorm_needs_two_rows_in_training() {
        let mut st = BatchNormState::new(1, 0.9, BN_EPS).unwrap();
        assert!(matches!(
            batchnorm_forward(&col(&[1.0]), &mut st, Mode::Train),
            Err(Error::BatchSize { got: 1, need: 2 })
        ));
        assert!(batchnorm_forward(&col(&[1.0]), &mut st, Mode::Eval).is_ok());
    }

    #[test]
    fn batchnorm_output_statistics() {
        let mut rng = RngStream::new(5);
        let t = sample_normal(&mut rng, &[64, 6], 3.0, 2.0);
        let mut st = BatchNormState::new(6, 0.9, BN_EPS).unwrap();
        let (y, _) = batchnorm_forward(&t, &mut st, Mode::Train).unwrap();
        let (m, s) = column_stats(&y).unwrap();
        assert!(m.max_abs() < 1e-10);
        assert!(s.data().iter().all(|v| (v - 1.0).abs() < 1e-6));
    }

    #[test]
    fn batchnorm_running_stats_ema() {
        let mut st = BatchNormState::new(1, 0.9, BN_EPS).unwrap();
        batchnorm_forward(&col(&[0.0, 2.0]), &mut st, Mode::Train).unwrap();
        batchnorm_forward(&col(&[10.0, 14.0]), &mut st, Mode::Train).unwrap();
        assert!((st.running_mean().data()[0] - (0.9 * 1.0 + 0.1 * 12.0)).abs() < 1e-15);
        assert!((st.running_var().data()[0] - (0.9 * 1.0 + 0.1 * 4.0)).abs() < 1e-15);
        let (y, cache) = batchnorm_forward(&col(&[2.1]), &mut st, Mode::Eval).unwrap();
        let expected = (2.1 - st.running_mean().data()[0]) / (st.running_var().data()[0] + BN_EPS).sqrt();
        assert!((y.data()[0] - expected).abs() < 1e-15);
        assert!(matches!(batchnorm_backward(&col(&[1.0]), &cache), Err(Error::Contract(_))));
    }

    #[test]
    fn batchnorm_backward_zero_and_symmetric() {
        let mut st = BatchNormState::new(1, 0.9, BN_EPS).unwrap();
        let (_, cache) = batchnorm_forward(&col(&[-1.0, 1.0]), &mut st, Mode::Train).unwrap();
        let (gt, gg, gb) = batchnorm_backward(&col(&[0.0, 0.0]), &cache).unwrap();
        assert!(gt.max_abs() == 0.0 && gg.max_abs() == 0.0 && gb.max_abs() == 0.0);
        let (gt, _, _) = batchnorm_backward(&col(&[0.7, -0.7]), &cache).unwrap();
        assert!((gt.data()[0] + gt.data()[1]).abs() < 1e-15);
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-4)
    }

    #[test]
    fn batchnorm_backward_finite_differences() {
        let mut rng = RngStream::new(19);
        let t = sample_normal(&mut rng, &[6, 3], 0.5, 1.5);
        let r = sample_normal(&mut rng, &[6, 3], 0.0, 1.0);
        let mut st = BatchNormState::new(3, 0.9, BN_EPS).unwrap();
        st.gamma = Tensor::vector(vec![1.3, -0.4, 2.0]);
        st.beta = Tensor::vector(vec![0.1, 0.2, -0.3]);
        let loss = |t: &Tensor, st: &BatchNormState| {
            let mut s = st.clone();
            batchnorm_forward(t, &mut s, Mode::Train).unwrap().0.dot(&r).unwrap()
        };
        let (_, cache) = batchnorm_forward(&t, &mut st.clone(), Mode::Train).unwrap();
        let (gt, gg, gb) = batchnorm_backward(&r, &cache).unwrap();
        let h = 1e-5;
        for i in 0..t.len() {
            let (mut p, mut m) = (t.clone(), t.clone());
            p.data_mut()[i] += h;
            m.data_mut()[i] -= h;
            let fd = (loss(&p, &st) - loss(&m, &st)) / (2.0 * h);
            assert!(rel(gt.data()[i], fd) < 1e-6, "t[{i}]");
        }
        for j in 0..3 {
            let (mut p, mut m) = (st.clone(), st.clone());
            p.gamma.data_mut()[j] += h;
            m.gamma.data_mut()[j] -= h;
            assert!(rel(gg.data()[j], (loss(&t, &p) - loss(&t, &m)) / (2.0 * h)) < 1e-6);
            let (mut p, mut m) = (st.clone(), st.clone());
            p.beta.data_mut()[j] += h;
            m.beta.data_mut()[j] -= h;
            assert!(rel(gb.data()[j], (loss(&t, &p) - loss(&t, &m)) / (2.0 * h)) < 1e-6);
        }
    }

    #[test]
    fn meanonly_examples() {
        let mut st = MeanOnlyBNState::new(1, 0.9).unwrap();
        let y = meanonly_forward(&col(&[1.0, 2.0, 3.0]), &Tensor::zeros(&[1]), &mut st, Mode::Train).unwrap();
        assert_eq!(y.data(), &[-1.0, 0.0, 1.0]);
        let mut st = MeanOnlyBNState::new(1, 0.9).unwrap();
        let y = meanonly_forward(&col(&[5.0; 4]), &Tensor::full(&[1], 2.0), &mut st, Mode::Train).unwrap();
        assert!(y.data().iter().all(|&v| v == 2.0));
        // eval uses the stored mean of t, then adds b
        let y = meanonly_forward(&col(&[6.0]), &Tensor::full(&[1], 2.0), &mut st, Mode::Eval).unwrap();
        assert_eq!(y.data(), &[3.0]);
    }

    #[test]
    fn meanonly_random_columns_centered() {
        let mut rng = RngStream::new(23);
        let t = sample_normal(&mut rng, &[50, 7], 4.0, 2.0);
        let mut st = MeanOnlyBNState::new(7, 0.9).unwrap();
        let y = meanonly_forward(&t, &Tensor::zeros(&[7]), &mut st, Mode::Train).unwrap();
        assert!(column_mean(&y).unwrap().iter().all(|m| m.abs() < 1e-12));
    }

    #[test]
    fn meanonly_backward_examples() {
        let (gt, gb) = meanonly_backward(&col(&[1.0, 2.0, 3.0])).unwrap();
        assert_eq!(gt.data(), &[-1.0, 0.0, 1.0]);
        assert_eq!(gb.data(), &[6.0]);
        let centered = col(&[-0.5, 1.5, -1.0]);
        assert_eq!(meanonly_backward(&centered).unwrap().0, centered);
    }

    #[test]
    fn meanonly_backward_finite_differences() {
        let mut rng = RngStream::new(29);
        let t = sample_normal(&mut rng, &[5, 2], 0.0, 1.0);
        let b = Tensor::vector(vec![0.3, -0.2]);
        // nonlinear loss so the gradient is not constant
        let loss = |t: &Tensor, b: &Tensor| {
            let mut st = MeanOnlyBNState::new(2, 0.9).unwrap();
            let y = meanonly_forward(t, b, &mut st, Mode::Train).unwrap();
            y.data().iter().enumerate().map(|(i, v)| (i as f64 + 1.0) * v * v * 0.5 + v).sum::<f64>()
        };
        let mut st = MeanOnlyBNState::new(2, 0.9).unwrap();
        let y = meanonly_forward(&t, &b, &mut st, Mode::Train).unwrap();
        let grad_y = Tensor::new(
            vec![5, 2],
            y.data().iter().enumerate().map(|(i, v)| (i as f64 + 1.0) * v + 1.0).collect(),
        )
        .unwrap();
        let (gt, gb) = meanonly_backward(&grad_y).unwrap();
        let h = 1e-5;
        for i in 0..t.len() {
            let (mut p, mut m) = (t.clone(), t.clone());
            p.data_mut()[i] += h;
            m.data_mut()[i] -= h;
            assert!(rel(gt.data()[i], (loss(&p, &b) - loss(&m, &b)) / (2.0 * h)) < 1e-6);
        }
        for j in 0..2 {
            let (mut p, mut m) = (b.clone(), b.clone());
            p.data_mut()[j] += h;
            m.data_mut()[j] -= h;
            assert!(rel(gb.data()[j], (loss(&t, &p) - loss(&t, &m)) / (2.0 * h)) < 1e-6);
        }
    }

    #[test]
    fn init_scale_bias_examples() {
        // μ = 0, σ = 1
        let (g, b) = init_scale_bias(&col(&[-1.0, 1.0]), 1e-6).unwrap();
        assert_eq!(g[0], 1.0 / (1.0 + 1e-6));
        assert_eq!(b[0], 0.0);
        // μ = 4, σ = 2
        let (g, b) = init_scale_bias(&col(&[2.0, 6.0]), 1e-6).unwrap();
        assert_eq!(g[0], 1.0 / (2.0 + 1e-6));
        assert_eq!(b[0], -4.0 / (2.0 + 1e-6));
        assert!(matches!(init_scale_bias(&col(&[1.0]), 1e-6), Err(Error::BatchSize { .. })));
        // zero σ is absorbed by eps
        let (g, _) = init_scale_bias(&col(&[3.0, 3.0]), 1e-6).unwrap();
        assert!(g[0].is_finite());
    }

    #[test]
    fn dense_init_normalizes_preactivations() {
        let mut rng = RngStream::new(37);
        let x = sample_normal(&mut rng, &[100, 20], 1.0, 3.0);
        let v = sample_normal(&mut rng, &[8, 20], 0.0, 0.05);
        let mut p = WeightNormParam::new(v, Tensor::full(&[8], 1.0)).unwrap();
        let mut b = Tensor::zeros(&[8]);
        let rep = data_dependent_init(&mut p, &mut b, &x, INIT_EPS).unwrap();
        assert!(rep.post_mean.max_abs() < 1e-8);
        assert!(rep.post_std.data().iter().all(|s| (s - 1.0).abs() < 1e-6));
        assert_eq!(p.g().data(), rep.g_init.data());
        assert_eq!(b.data(), rep.b_init.data());
    }
}
