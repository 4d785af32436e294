//! Gradient covariance under the weight-norm projection, dominant-eigenvector
//! alignment and per-step `‖v‖` traces.

use std::io::Write;

use crate::error::{Error, Result};
use crate::network::{softmax_xent, Layer, Model, Weights};
use crate::numerics::linalg::covariance;
use crate::numerics::rng::RngStream;
use crate::numerics::tensor::{dot, norm, Tensor};
use crate::Mode;

/// Convergence threshold on `‖Cx − λx‖ / ‖C‖_max` for power iteration.
pub const POWER_TOL: f64 = 1e-10;
pub const POWER_MAX_ITERS: usize = 10_000;

/// Largest probe batch for per-example gradients.
pub const MAX_PROBE: usize = 256;

/// Sample covariance (1/n) of per-example weight gradients.
#[derive(Debug, Clone)]
pub struct GradCovariance {
    pub c: Tensor,
    pub n_samples: usize,
}

pub fn grad_covariance(per_example_grads: &Tensor) -> Result<GradCovariance> {
    let (n, _) = per_example_grads.dims2()?;
    if n < 2 {
        return Err(Error::SampleSize { got: n, need: 2 });
    }
    let (c, _) = covariance(per_example_grads)?;
    Ok(GradCovariance { c, n_samples: n })
}

/// `D = (g²/‖v‖²) M_w C M_w` with `M_w = I − wwᵀ/‖w‖²`, for one unit's
/// direction `v` and scale `g`.
pub fn transformed_covariance(c: &GradCovariance, v: &[f64], g: f64) -> Result<Tensor> {
    let (k, k2) = c.c.dims2()?;
    if k != k2 || k != v.len() {
        return Err(Error::Dimension(format!(
            "covariance is {k}×{k2} but direction has {} entries",
            v.len()
        )));
    }
    let nv = norm(v);
    if !(nv >= crate::weight_norm::MIN_DIRECTION_NORM) {
        return Err(Error::DegenerateDirection { unit: 0, norm: nv });
    }
    let u: Vec<f64> = v.iter().map(|x| x / nv).collect();
    let cm = c.c.data();
    let cu: Vec<f64> = cm.chunks_exact(k).map(|row| dot(row, &u)).collect();
    let ucu = dot(&u, &cu);
    let s2 = (g / nv) * (g / nv);
    // M C M = C − u(Cu)ᵀ − (Cu)uᵀ + (uᵀCu) uuᵀ
    let mut d = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            let m = cm[i * k + j] - u[i] * cu[j] - cu[i] * u[j] + ucu * u[i] * u[j];
            d[i * k + j] = s2 * m;
        }
    }
    for i in 0..k {
        for j in 0..i {
            let avg = 0.5 * (d[i * k + j] + d[j * k + i]);
            d[i * k + j] = avg;
            d[j * k + i] = avg;
        }
    }
    Tensor::new(vec![k, k], d)
}

/// Top eigenpair of a symmetric PSD matrix by power iteration.
pub fn dominant_eigenvector(c: &Tensor) -> Result<(f64, Vec<f64>)> {
    let (k, k2) = c.dims2()?;
    if k != k2 {
        return Err(Error::Dimension(format!("covariance must be square, got {k}×{k2}")));
    }
    let scale = c.max_abs();
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::UndefinedAlignment("zero covariance".into()));
    }
    let mut rng = RngStream::new(0x5eed);
    let mut x: Vec<f64> = (0..k).map(|_| rng.standard_normal()).collect();
    let n0 = norm(&x);
    x.iter_mut().for_each(|v| *v /= n0);
    let matvec = |x: &[f64]| -> Vec<f64> { c.data().chunks_exact(k).map(|row| dot(row, x)).collect() };
    let mut lambda = 0.0;
    for _ in 0..POWER_MAX_ITERS {
        let y = matvec(&x);
        lambda = dot(&x, &y);
        let resid: f64 = y.iter().zip(&x).map(|(a, b)| (a - lambda * b).powi(2)).sum::<f64>().sqrt();
        if resid <= POWER_TOL * scale {
            break;
        }
        let ny = norm(&y);
        if ny == 0.0 {
            return Err(Error::UndefinedAlignment("iterate collapsed to zero".into()));
        }
        x = y.into_iter().map(|v| v / ny).collect();
    }
    Ok((lambda, x))
}

/// `|cos|` between `w` and the dominant eigenvector of `C`.
pub fn dominant_alignment(c: &GradCovariance, w: &[f64]) -> Result<f64> {
    let (k, _) = c.c.dims2()?;
    if w.len() != k {
        return Err(Error::Dimension(format!("weight has {} entries, covariance is {k}×{k}", w.len())));
    }
    let nw = norm(w);
    if !(nw > 0.0) {
        return Err(Error::DegenerateDirection { unit: 0, norm: nw });
    }
    let (_, x) = dominant_eigenvector(&c.c)?;
    Ok((dot(&x, w) / nw).abs().min(1.0))
}

/// Rows `[n × fan_in]` of `∇w L` for one unit of one affine layer, with a
/// separate backward pass per example. Layers with batch statistics have no
/// per-example gradient and are rejected.
pub fn per_example_weight_grads(
    model: &Model,
    x: &Tensor,
    labels: &[usize],
    layer: usize,
    unit: usize,
) -> Result<Tensor> {
    let n = x.shape()[0];
    if n != labels.len() {
        return Err(Error::Dimension(format!("{n} examples but {} labels", labels.len())));
    }
    if n > MAX_PROBE {
        return Err(Error::SampleSize { got: n, need: MAX_PROBE });
    }
    let affine = match model.layers().get(layer) {
        Some(Layer::Affine(a)) => a,
        _ => return Err(Error::Contract(format!("layer {layer} is not an affine layer"))),
    };
    if model.layers().iter().any(|l| matches!(l, Layer::Affine(a) if a.norm.uses_batch_stats())) {
        return Err(Error::Contract(
            "per-example gradients are undefined with batch statistics".into(),
        ));
    }
    if unit >= affine.units() {
        return Err(Error::Dimension(format!("unit {unit} of {}", affine.units())));
    }
    let fan = affine.fan_in();
    let per = x.len() / n;
    let mut rows = Vec::with_capacity(n * fan);
    let mut m = model.clone();
    let mut one_shape = x.shape().to_vec();
    one_shape[0] = 1;
    for (i, &label) in labels.iter().enumerate() {
        let xi = Tensor::new(one_shape.clone(), x.data()[i * per..(i + 1) * per].to_vec())?;
        let (cache, logits) = m.forward(&xi, Mode::Train)?;
        let (_, gl) = softmax_xent(&logits, &[label])?;
        let grads = m.backward(&cache, &gl)?;
        let gw = grads.weight_grads[layer].as_ref().expect("affine layer has a weight gradient");
        rows.extend_from_slice(&gw.data()[unit * fan..(unit + 1) * fan]);
    }
    Tensor::new(vec![n, fan], rows)
}

/// One trace row: per-layer means over units plus the relative change of the
/// whole direction tensor since the previous record.
#[derive(Debug, Clone, PartialEq)]
pub struct NormTraceRow {
    pub step: usize,
    pub layer: usize,
    pub v_norm: f64,
    pub g: f64,
    pub g_over_v: f64,
    pub rel_update: f64,
    /// Per-unit `‖v‖`, for monotonicity checks.
    pub unit_norms: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct NormTrace {
    rows: Vec<NormTraceRow>,
    previous: Vec<(usize, Tensor)>,
}

pub const TRACE_HEADER: &str = "step,layer,v_norm,g,g_over_v,rel_update";

impl NormTrace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn rows(&self) -> &[NormTraceRow] {
        &self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn layer_rows(&self, layer: usize) -> impl Iterator<Item = &NormTraceRow> {
        self.rows.iter().filter(move |r| r.layer == layer)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{TRACE_HEADER}")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.step, r.layer, r.v_norm, r.g, r.g_over_v, r.rel_update
            )?;
        }
        Ok(())
    }
}

/// Appends one row per weight-normalized layer of `model`.
pub fn record_norm_trace(trace: &mut NormTrace, model: &Model, step: usize) -> Result<()> {
    let mut current = Vec::new();
    for (i, layer) in model.layers().iter().enumerate() {
        let Layer::Affine(a) = layer else { continue };
        let Weights::Normalized(p) = &a.weights else { continue };
        let units = p.units() as f64;
        let norms = p.norms();
        let v_norm = norms.iter().sum::<f64>() / units;
        let g = p.g().data().iter().sum::<f64>() / units;
        let g_over_v = p.g().data().iter().zip(norms).map(|(g, n)| g / n).sum::<f64>() / units;
        let rel_update = match trace.previous.iter().find(|(l, _)| *l == i) {
            Some((_, prev)) => p.v().sub(prev)?.norm() / prev.norm(),
            None => 0.0,
        };
        let row = NormTraceRow {
            step,
            layer: i,
            v_norm,
            g,
            g_over_v,
            rel_update,
            unit_norms: norms.to_vec(),
        };
        if ![row.v_norm, row.g, row.g_over_v, row.rel_update].iter().all(|x| x.is_finite()) {
            return Err(Error::Value(format!("non-finite norm trace at step {step}, layer {i}")));
        }
        trace.rows.push(row);
        current.push((i, p.v().clone()));
    }
    if current.is_empty() {
        return Err(Error::Contract("norm trace needs weight-normalized layers".into()));
    }
    trace.previous = current;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{build_model, Activation, LayerSpec, NormMode};
    use crate::numerics::linalg::sym_eigen;
    use crate::numerics::rng::sample_normal;
    use crate::optim::sgd_step;

    fn two_pass_cov(x: &Tensor) -> Vec<Vec<f64>> {
        let (n, k) = x.dims2().unwrap();
        let mean: Vec<f64> = (0..k).map(|j| (0..n).map(|i| x.data()[i * k + j]).sum::<f64>() / n as f64).collect();
        let mut c = vec![vec![0.0; k]; k];
        for i in 0..n {
            for a in 0..k {
                for b in 0..k {
                    c[a][b] += (x.data()[i * k + a] - mean[a]) * (x.data()[i * k + b] - mean[b]) / n as f64;
                }
            }
        }
        c
    }

    fn random_psd(rng: &mut RngStream, k: usize) -> GradCovariance {
        let a = sample_normal(rng, &[k + 3, k], 0.0, 1.0);
        grad_covariance(&a).unwrap()
    }

    #[test]
    fn covariance_examples() {
        let same = Tensor::from_rows(&[[1.0, 2.0], [1.0, 2.0], [1.0, 2.0]]).unwrap();
        assert_eq!(grad_covariance(&same).unwrap().c.max_abs(), 0.0);
        let c = grad_covariance(&Tensor::from_rows(&[[1.0, 0.0], [-1.0, 0.0]]).unwrap()).unwrap();
        assert_eq!(c.c.data(), &[1.0, 0.0, 0.0, 0.0]);
        assert!(matches!(
            grad_covariance(&Tensor::from_rows(&[[1.0, 0.0]]).unwrap()),
            Err(Error::SampleSize { got: 1, .. })
        ));
        let x = sample_normal(&mut RngStream::new(3), &[50, 4], 1.0, 2.0);
        let c = grad_covariance(&x).unwrap();
        let oracle = two_pass_cov(&x);
        for a in 0..4 {
            for b in 0..4 {
                assert!((c.c.data()[a * 4 + b] - oracle[a][b]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn covariance_ignores_row_order() {
        let x = sample_normal(&mut RngStream::new(5), &[30, 3], 0.0, 1.0);
        let mut rows: Vec<Vec<f64>> = x.rows().map(|r| r.to_vec()).collect();
        rows.reverse();
        let y = Tensor::from_rows(&rows).unwrap();
        let d = grad_covariance(&x).unwrap().c.max_abs_diff(&grad_covariance(&y).unwrap().c).unwrap();
        assert!(d < 1e-14);
    }

    #[test]
    fn transformed_covariance_annihilates_w() {
        let mut rng = RngStream::new(11);
        for k in [2, 5, 16] {
            let c = random_psd(&mut rng, k);
            let v: Vec<f64> = (0..k).map(|_| rng.standard_normal()).collect();
            let d = transformed_covariance(&c, &v, 1.7).unwrap();
            let dv: Vec<f64> = d.data().chunks_exact(k).map(|r| dot(r, &v)).collect();
            assert!(norm(&dv) <= 1e-12 * d.norm() * norm(&v));
        }
    }

    #[test]
    fn identity_covariance_gives_projector() {
        let c = GradCovariance {
            c: Tensor::from_rows(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]).unwrap(),
            n_samples: 2,
        };
        let v = [3.0, 0.0, 4.0];
        let g = 2.0;
        let d = transformed_covariance(&c, &v, g).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let m = if i == j { 1.0 } else { 0.0 } - v[i] * v[j] / 25.0;
                assert!((d.data()[i * 3 + j] - g * g / 25.0 * m).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn transformed_covariance_matches_dense_products() {
        let mut rng = RngStream::new(21);
        let k = 6;
        let c = random_psd(&mut rng, k);
        let v: Vec<f64> = (0..k).map(|_| rng.standard_normal()).collect();
        let g = -0.8;
        let nv2 = dot(&v, &v);
        let m: Vec<Vec<f64>> = (0..k)
            .map(|i| (0..k).map(|j| if i == j { 1.0 } else { 0.0 } - v[i] * v[j] / nv2).collect())
            .collect();
        let cm = c.c.data();
        let mut oracle = vec![vec![0.0; k]; k];
        for i in 0..k {
            for j in 0..k {
                let mut s = 0.0;
                for a in 0..k {
                    for b in 0..k {
                        s += m[i][a] * cm[a * k + b] * m[b][j];
                    }
                }
                oracle[i][j] = g * g / nv2 * s;
            }
        }
        let d = transformed_covariance(&c, &v, g).unwrap();
        for i in 0..k {
            for j in 0..k {
                assert!((d.data()[i * k + j] - oracle[i][j]).abs() < 1e-12);
            }
        }
        let eig = sym_eigen(&d).unwrap();
        assert!(eig.values.iter().all(|&l| l >= -1e-10));
    }

    #[test]
    fn alignment_examples() {
        let w = [1.0, 2.0, -2.0];
        let outer = |u: &[f64]| GradCovariance {
            c: Tensor::new(vec![3, 3], (0..9).map(|i| u[i / 3] * u[i % 3]).collect()).unwrap(),
            n_samples: 2,
        };
        assert!((dominant_alignment(&outer(&w), &w).unwrap() - 1.0).abs() < 1e-12);
        let perp = [2.0, -1.0, 0.0];
        assert!(dominant_alignment(&outer(&perp), &w).unwrap() < 1e-12);
        let zero = GradCovariance {
            c: Tensor::zeros(&[3, 3]),
            n_samples: 2,
        };
        assert!(matches!(dominant_alignment(&zero, &w), Err(Error::UndefinedAlignment(_))));
    }

    #[test]
    fn alignment_matches_jacobi() {
        let mut rng = RngStream::new(31);
        for _ in 0..10 {
            let c = random_psd(&mut rng, 6);
            let w: Vec<f64> = (0..6).map(|_| rng.standard_normal()).collect();
            let eig = sym_eigen(&c.c).unwrap();
            let top = eig.vector(0);
            let expected = dot(&top, &w).abs() / norm(&w);
            assert!((dominant_alignment(&c, &w).unwrap() - expected).abs() < 1e-8);
        }
    }

    fn wn_mlp() -> Model {
        let specs = [
            LayerSpec::dense(5, 6, NormMode::WeightNorm, Activation::leaky()),
            LayerSpec::dense(6, 3, NormMode::WeightNorm, Activation::Identity),
        ];
        build_model(&[5], &specs, RngStream::new(2)).unwrap()
    }

    #[test]
    fn per_example_grads_average_to_batch_grad() {
        let m = wn_mlp();
        let x = sample_normal(&mut RngStream::new(4), &[7, 5], 0.0, 1.0);
        let labels = [0, 1, 2, 0, 1, 2, 0];
        let per = per_example_weight_grads(&m, &x, &labels, 0, 2).unwrap();
        let mut mm = m.clone();
        let (cache, logits) = mm.forward(&x, Mode::Train).unwrap();
        let (_, gl) = softmax_xent(&logits, &labels).unwrap();
        let g = mm.backward(&cache, &gl).unwrap();
        let batch = g.weight_grads[0].as_ref().unwrap();
        for j in 0..5 {
            let mean: f64 = (0..7).map(|i| per.data()[i * 5 + j]).sum::<f64>() / 7.0;
            assert!((mean - batch.data()[2 * 5 + j]).abs() < 1e-14);
        }
    }

    #[test]
    fn sgd_trace_grows_monotonically() {
        let mut m = wn_mlp();
        let x = sample_normal(&mut RngStream::new(6), &[16, 5], 0.0, 1.0);
        let labels: Vec<usize> = (0..16).map(|i| i % 3).collect();
        let mut trace = NormTrace::new();
        assert!(trace.is_empty());
        for step in 0..30 {
            record_norm_trace(&mut trace, &m, step).unwrap();
            let (cache, logits) = m.forward(&x, Mode::Train).unwrap();
            let (_, gl) = softmax_xent(&logits, &labels).unwrap();
            let g = m.backward(&cache, &gl).unwrap();
            sgd_step(&mut m.parameters_mut(), &g.tensors, 0.5).unwrap();
            m.commit().unwrap();
        }
        for layer in [0, 1] {
            let rows: Vec<_> = trace.layer_rows(layer).collect();
            assert_eq!(rows.len(), 30);
            for pair in rows.windows(2) {
                for (a, b) in pair[0].unit_norms.iter().zip(&pair[1].unit_norms) {
                    assert!(*b >= a * (1.0 - 1e-12));
                }
            }
        }
        let mut csv = Vec::new();
        trace.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with(TRACE_HEADER));
        assert_eq!(text.lines().count(), 61);
    }

    #[test]
    fn trace_needs_weight_norm() {
        let specs = [LayerSpec::dense(2, 2, NormMode::Standard, Activation::Identity)];
        let m = build_model(&[2], &specs, RngStream::new(0)).unwrap();
        assert!(record_norm_trace(&mut NormTrace::new(), &m, 0).is_err());
    }
}
