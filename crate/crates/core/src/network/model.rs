use super::layers::{AffineKind, AffineLayer, LayerSpec, NormMode, Weights};
use super::ops::{gaussian_noise_layer, Activation};
use crate::error::{Error, Result};
use crate::normalization::{
    batchnorm_backward, batchnorm_forward, column_stats, init_scale_bias, meanonly_backward,
    meanonly_forward, BatchNormCache, InitReport,
};
use crate::numerics::conv::{
    conv2d, conv2d_backward, conv_output_size, global_avg_pool, global_avg_pool_backward,
    max_pool2x2, max_pool2x2_backward,
};
use crate::numerics::linalg::{matmul, matmul_tn};
use crate::numerics::rng::{sample_normal, RngStream};
use crate::numerics::stats::column_sum;
use crate::numerics::tensor::{norm, Tensor};
use crate::Mode;

/// Standard deviation of the initial direction entries.
pub const INIT_STD: f64 = 0.05;

#[derive(Debug, Clone)]
pub enum Layer {
    Affine(AffineLayer),
    Activation(Activation),
    MaxPool2x2,
    GlobalAvgPool,
    GaussianNoise { sigma: f64 },
}

/// Per-layer parameters, normalization state and the noise stream.
#[derive(Debug, Clone)]
pub struct Model {
    input_shape: Vec<usize>,
    specs: Vec<LayerSpec>,
    layers: Vec<Layer>,
    rng: RngStream,
    version: u64,
}

/// What backward needs from a forward pass, tagged with the parameter version
/// it was computed under.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    version: u64,
    mode: Mode,
    entries: Vec<Entry>,
}

impl ForwardCache {
    pub fn mode(&self) -> Mode {
        self.mode
    }
}

#[derive(Debug, Clone)]
enum Entry {
    Affine {
        input: Tensor,
        w: Tensor,
        pre: Tensor,
        bn: Option<BatchNormCache>,
    },
    Activation {
        pre: Tensor,
    },
    MaxPool {
        in_shape: Vec<usize>,
        argmax: Vec<usize>,
    },
    GlobalAvgPool {
        in_shape: Vec<usize>,
    },
    Identity,
}

/// Gradients aligned with [`Model::parameters`].
#[derive(Debug, Clone)]
pub struct Gradients {
    pub tensors: Vec<Tensor>,
    /// `∇w L` of the effective weights, per layer (`None` for parameter-free layers).
    pub weight_grads: Vec<Option<Tensor>>,
}

/// Samples every weight direction from `N(0, 0.05²)` with `g = 1`, `b = 0`.
///
/// `input_shape` excludes the batch axis: `[features]` for dense inputs or
/// `[channels, height, width]` for images.
pub fn build_model(input_shape: &[usize], specs: &[LayerSpec], mut rng: RngStream) -> Result<Model> {
    if specs.is_empty() {
        return Err(Error::Build("model needs at least one layer".into()));
    }
    if input_shape.is_empty() || input_shape.contains(&0) {
        return Err(Error::Build(format!("invalid input shape {input_shape:?}")));
    }
    let mut cur = input_shape.to_vec();
    let mut layers = Vec::with_capacity(specs.len());
    for (i, spec) in specs.iter().enumerate() {
        let layer = match *spec {
            LayerSpec::Dense {
                fan_in,
                fan_out,
                norm,
                activation,
                log_scale,
            } => {
                let flat: usize = cur.iter().product();
                if flat != fan_in || fan_out == 0 {
                    return Err(Error::Build(format!(
                        "layer {i}: dense expects {fan_in} inputs but receives shape {cur:?}"
                    )));
                }
                let dir = sample_normal(&mut rng, &[fan_out, fan_in], 0.0, INIT_STD);
                cur = vec![fan_out];
                Layer::Affine(AffineLayer::new(
                    AffineKind::Dense { fan_in, fan_out },
                    norm,
                    activation,
                    dir,
                    log_scale,
                )?)
            }
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                pad,
                norm,
                activation,
                log_scale,
            } => {
                let &[c, h, w] = cur.as_slice() else {
                    return Err(Error::Build(format!(
                        "layer {i}: conv2d needs a [C, H, W] input, got {cur:?}"
                    )));
                };
                if c != in_channels || out_channels == 0 {
                    return Err(Error::Build(format!(
                        "layer {i}: conv2d expects {in_channels} channels, got {c}"
                    )));
                }
                let (oh, ow) = conv_output_size(h, w, kernel, kernel, stride, pad)
                    .map_err(|e| Error::Build(format!("layer {i}: {e}")))?;
                let dir = sample_normal(&mut rng, &[out_channels, in_channels, kernel, kernel], 0.0, INIT_STD);
                cur = vec![out_channels, oh, ow];
                Layer::Affine(AffineLayer::new(
                    AffineKind::Conv {
                        in_channels,
                        out_channels,
                        kernel,
                        stride,
                        pad,
                    },
                    norm,
                    activation,
                    dir,
                    log_scale,
                )?)
            }
            LayerSpec::Activation { activation } => Layer::Activation(activation),
            LayerSpec::MaxPool2x2 => {
                let &[c, h, w] = cur.as_slice() else {
                    return Err(Error::Build(format!("layer {i}: max pool needs [C, H, W], got {cur:?}")));
                };
                if h < 2 || w < 2 {
                    return Err(Error::Build(format!("layer {i}: max pool on {h}×{w}")));
                }
                cur = vec![c, h / 2, w / 2];
                Layer::MaxPool2x2
            }
            LayerSpec::GlobalAvgPool => {
                let &[c, _, _] = cur.as_slice() else {
                    return Err(Error::Build(format!("layer {i}: global pool needs [C, H, W], got {cur:?}")));
                };
                cur = vec![c];
                Layer::GlobalAvgPool
            }
            LayerSpec::GaussianNoise { sigma } => {
                if !(sigma >= 0.0) {
                    return Err(Error::Build(format!("layer {i}: noise sigma {sigma} < 0")));
                }
                Layer::GaussianNoise { sigma }
            }
        };
        layers.push(layer);
    }
    if cur.len() != 1 {
        return Err(Error::Build(format!(
            "model output must be a vector of logits, got per-example shape {cur:?}"
        )));
    }
    Ok(Model {
        input_shape: input_shape.to_vec(),
        specs: specs.to_vec(),
        layers,
        rng,
        version: 0,
    })
}

/// `N×C×H×W → (N·H·W)×C`.
fn nchw_to_rows(t: &Tensor) -> Tensor {
    let &[n, c, h, w] = t.shape() else { unreachable!("4-D tensor expected") };
    let hw = h * w;
    let mut out = vec![0.0; t.len()];
    let d = t.data();
    for b in 0..n {
        for ch in 0..c {
            let src = &d[(b * c + ch) * hw..(b * c + ch + 1) * hw];
            for (p, &v) in src.iter().enumerate() {
                out[(b * hw + p) * c + ch] = v;
            }
        }
    }
    Tensor::new(vec![n * hw, c], out).expect("row layout")
}

fn rows_to_nchw(rows: &Tensor, shape: &[usize]) -> Tensor {
    let &[n, c, h, w] = shape else { unreachable!("4-D shape expected") };
    let hw = h * w;
    let mut out = vec![0.0; rows.len()];
    let d = rows.data();
    for b in 0..n {
        for ch in 0..c {
            for p in 0..hw {
                out[(b * c + ch) * hw + p] = d[(b * hw + p) * c + ch];
            }
        }
    }
    Tensor::new(shape.to_vec(), out).expect("nchw layout")
}

fn add_bias(mut rows: Tensor, b: &Tensor) -> Tensor {
    let d = b.len();
    for row in rows.data_mut().chunks_exact_mut(d) {
        for (x, bi) in row.iter_mut().zip(b.data()) {
            *x += bi;
        }
    }
    rows
}

/// Linear part `w·x` laid out as `[rows × units]`, plus the conv output shape.
fn linear_rows(kind: AffineKind, x: &Tensor, w: &Tensor) -> Result<(Tensor, Option<Vec<usize>>)> {
    match kind {
        AffineKind::Dense { .. } => {
            let x2 = x.flatten_rows();
            let wt = w.transpose()?;
            Ok((matmul(&x2, &wt)?, None))
        }
        AffineKind::Conv { stride, pad, .. } => {
            let t4 = conv2d(x, w, stride, pad)?;
            let shape = t4.shape().to_vec();
            Ok((nchw_to_rows(&t4), Some(shape)))
        }
    }
}

/// Forward through one affine layer; returns `(activation output, pre-activation)`
/// and the batch-norm cache.
fn affine_forward(layer: &mut AffineLayer, x: &Tensor, mode: Mode) -> Result<(Tensor, Tensor, Option<Tensor>, Option<BatchNormCache>)> {
    let w = layer.weights.effective();
    let (rows, conv_shape) = linear_rows(layer.kind, x, &w)?;
    let (z_rows, bn) = match layer.norm {
        NormMode::Standard | NormMode::WeightNorm => {
            (add_bias(rows, layer.bias.as_ref().expect("bias")), None)
        }
        NormMode::BatchNorm => {
            let (y, c) = batchnorm_forward(&rows, layer.batch_norm.as_mut().expect("bn state"), mode)?;
            (y, Some(c))
        }
        NormMode::WeightNormMeanOnlyBn | NormMode::MeanOnlyBn => (
            meanonly_forward(
                &rows,
                layer.bias.as_ref().expect("bias"),
                layer.mean_only.as_mut().expect("mean-only state"),
                mode,
            )?,
            None,
        ),
    };
    let pre = match &conv_shape {
        Some(shape) => rows_to_nchw(&z_rows, shape),
        None => z_rows,
    };
    let out = layer.activation.forward(&pre);
    Ok((out, pre, Some(w), bn))
}

impl Model {
    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn rng(&self) -> &RngStream {
        &self.rng
    }

    /// Replaces the noise stream (used when restoring checkpoints).
    pub fn set_rng(&mut self, rng: RngStream) {
        self.rng = rng;
    }

    /// Incremented by every committed parameter change.
    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn affine_layers(&self) -> impl Iterator<Item = (usize, &AffineLayer)> {
        self.layers.iter().enumerate().filter_map(|(i, l)| match l {
            Layer::Affine(a) => Some((i, a)),
            _ => None,
        })
    }

    pub fn affine_layer_mut(&mut self, index: usize) -> Option<&mut AffineLayer> {
        match self.layers.get_mut(index) {
            Some(Layer::Affine(a)) => Some(a),
            _ => None,
        }
    }

    fn shape_input(&self, x: &Tensor) -> Result<Tensor> {
        let per: usize = self.input_shape.iter().product();
        let n = x.shape()[0];
        if x.len() != n * per {
            return Err(Error::Dimension(format!(
                "input of shape {:?} does not match model input {:?}",
                x.shape(),
                self.input_shape
            )));
        }
        let mut shape = vec![n];
        shape.extend_from_slice(&self.input_shape);
        x.clone().reshape(&shape)
    }

    /// Layerwise forward pass. Train mode uses minibatch statistics, updates
    /// running statistics and draws noise.
    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<(ForwardCache, Tensor)> {
        let (entries, out) = self.run(x, mode, true)?;
        Ok((
            ForwardCache {
                version: self.version,
                mode,
                entries,
            },
            out,
        ))
    }

    /// Eval-mode logits; does not touch any state.
    pub fn predict(&self, x: &Tensor) -> Result<Tensor> {
        let mut scratch = self.clone();
        Ok(scratch.run(x, Mode::Eval, false)?.1)
    }

    fn run(&mut self, x: &Tensor, mode: Mode, keep: bool) -> Result<(Vec<Entry>, Tensor)> {
        let mut h = self.shape_input(x)?;
        let mut entries = Vec::with_capacity(if keep { self.layers.len() } else { 0 });
        for layer in &mut self.layers {
            let (out, entry) = match layer {
                Layer::Affine(a) => {
                    let (out, pre, w, bn) = affine_forward(a, &h, mode)?;
                    let entry = keep.then(|| Entry::Affine {
                        input: h,
                        w: w.expect("weights"),
                        pre,
                        bn,
                    });
                    (out, entry)
                }
                Layer::Activation(act) => {
                    let out = act.forward(&h);
                    (out, keep.then_some(Entry::Activation { pre: h }))
                }
                Layer::MaxPool2x2 => {
                    let (out, argmax) = max_pool2x2(&h)?;
                    (out, keep.then(|| Entry::MaxPool { in_shape: h.shape().to_vec(), argmax }))
                }
                Layer::GlobalAvgPool => {
                    let out = global_avg_pool(&h)?;
                    (out, keep.then(|| Entry::GlobalAvgPool { in_shape: h.shape().to_vec() }))
                }
                Layer::GaussianNoise { sigma } => {
                    let out = gaussian_noise_layer(&h, *sigma, &mut self.rng, mode);
                    (out, keep.then_some(Entry::Identity))
                }
            };
            if let Some(e) = entry {
                entries.push(e);
            }
            h = out;
        }
        Ok((entries, h))
    }

    /// Exact gradients of every trainable tensor given `∂L/∂logits`.
    pub fn backward(&self, cache: &ForwardCache, grad_logits: &Tensor) -> Result<Gradients> {
        if cache.mode != Mode::Train {
            return Err(Error::Contract("backward needs a train-mode forward cache".into()));
        }
        if cache.version != self.version || cache.entries.len() != self.layers.len() {
            return Err(Error::Contract(format!(
                "stale forward cache (cache version {}, model version {})",
                cache.version, self.version
            )));
        }
        let mut per_layer: Vec<Vec<Tensor>> = vec![Vec::new(); self.layers.len()];
        let mut weight_grads: Vec<Option<Tensor>> = vec![None; self.layers.len()];
        let mut grad = grad_logits.clone();
        for (i, (layer, entry)) in self.layers.iter().zip(&cache.entries).enumerate().rev() {
            let need_input = i > 0;
            grad = match (layer, entry) {
                (Layer::Affine(a), Entry::Affine { input, w, pre, bn }) => {
                    pre.check_same_shape(&grad)?;
                    let gz = a.activation.backward(pre, &grad)?;
                    let gz_rows = match a.kind {
                        AffineKind::Conv { .. } => nchw_to_rows(&gz),
                        AffineKind::Dense { .. } => gz,
                    };
                    let mut extra = Vec::new();
                    let gt_rows = match a.norm {
                        NormMode::Standard | NormMode::WeightNorm => {
                            extra.push(Tensor::vector(column_sum(&gz_rows)?));
                            gz_rows
                        }
                        NormMode::BatchNorm => {
                            let (gt, gg, gb) = batchnorm_backward(&gz_rows, bn.as_ref().expect("bn cache"))?;
                            extra.push(gg);
                            extra.push(gb);
                            gt
                        }
                        NormMode::WeightNormMeanOnlyBn | NormMode::MeanOnlyBn => {
                            let (gt, gb) = meanonly_backward(&gz_rows)?;
                            extra.push(gb);
                            gt
                        }
                    };
                    let (gx, gw) = match a.kind {
                        AffineKind::Dense { .. } => {
                            let x2 = input.flatten_rows();
                            let gw = matmul_tn(&gt_rows, &x2)?;
                            let gx = if need_input {
                                Some(matmul(&gt_rows, w)?.reshape(input.shape())?)
                            } else {
                                None
                            };
                            (gx, gw)
                        }
                        AffineKind::Conv { stride, pad, .. } => {
                            let out_shape = pre.shape().to_vec();
                            let gt4 = rows_to_nchw(&gt_rows, &out_shape);
                            conv2d_backward(input, w, &gt4, stride, pad, need_input)?
                        }
                    };
                    let mut tensors = match &a.weights {
                        Weights::Plain(_) => vec![gw.clone()],
                        Weights::Normalized(p) => {
                            let (gv, gs) = p.backprop(&gw)?;
                            vec![gv, gs]
                        }
                    };
                    tensors.extend(extra);
                    per_layer[i] = tensors;
                    weight_grads[i] = Some(gw);
                    gx.unwrap_or_else(|| Tensor::zeros(&[1]))
                }
                (Layer::Activation(act), Entry::Activation { pre }) => act.backward(pre, &grad)?,
                (Layer::MaxPool2x2, Entry::MaxPool { in_shape, argmax }) => {
                    max_pool2x2_backward(in_shape, argmax, &grad)?
                }
                (Layer::GlobalAvgPool, Entry::GlobalAvgPool { in_shape }) => {
                    global_avg_pool_backward(in_shape, &grad)?
                }
                (Layer::GaussianNoise { .. }, Entry::Identity) => grad,
                _ => return Err(Error::Contract("forward cache does not match model layers".into())),
            };
        }
        Ok(Gradients {
            tensors: per_layer.into_iter().flatten().collect(),
            weight_grads,
        })
    }

    pub fn parameters(&self) -> Vec<&Tensor> {
        self.named_parameters().into_iter().map(|(_, t)| t).collect()
    }

    /// `("L{layer}.{name}", tensor)` in optimizer order.
    pub fn named_parameters(&self) -> Vec<(String, &Tensor)> {
        self.affine_layers()
            .flat_map(|(i, a)| {
                a.params()
                    .into_iter()
                    .map(move |(n, t)| (format!("L{i}.{n}"), t))
            })
            .collect()
    }

    /// Mutable trainable tensors; follow every update with [`commit`](Self::commit).
    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .filter_map(|l| match l {
                Layer::Affine(a) => Some(a.params_mut()),
                _ => None,
            })
            .flatten()
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|t| t.len()).sum()
    }

    /// Validates parameters after an update: refreshes cached `‖v‖`, rejects
    /// non-finite values, and invalidates outstanding forward caches.
    pub fn commit(&mut self) -> Result<()> {
        for layer in &mut self.layers {
            if let Layer::Affine(a) = layer {
                if let Weights::Normalized(p) = &mut a.weights {
                    p.refresh()?;
                }
            }
        }
        if let Some((name, _)) = self.named_parameters().into_iter().find(|(_, t)| !t.is_finite()) {
            return Err(Error::Value(format!("parameter {name} became non-finite")));
        }
        self.version += 1;
        Ok(())
    }

    /// Effective weight tensor of every affine layer.
    pub fn effective_weights(&self) -> Vec<Tensor> {
        self.affine_layers().map(|(_, a)| a.weights.effective()).collect()
    }

    /// Unit-weighted mean of `g/‖v‖` and `‖v‖` across affine layers.
    pub fn scale_stats(&self) -> (f64, f64) {
        let (mut ratio, mut norm_sum, mut units) = (0.0, 0.0, 0.0);
        for (_, a) in self.affine_layers() {
            let (r, n) = a.scale_stats();
            let u = a.units() as f64;
            ratio += r * u;
            norm_sum += n * u;
            units += u;
        }
        (ratio / units, norm_sum / units)
    }

    /// Data-dependent initialization in one feedforward pass over `x`.
    ///
    /// Each affine layer sees the already-initialized output of the layers
    /// before it. The normalized pre-activation `t = v·x/‖v‖` fixes
    /// `g = 1/(σ[t]+eps)` and `b = −μ[t]/(σ[t]+eps)`; plain-weight layers then
    /// store `w = g v/‖v‖`. Mean-only layers keep `b = 0` (their centering
    /// already removes μ) and batch-normalized layers get `β = 0` and
    /// `γ = sqrt(σ[w·x]² + eps)`, so all five modes start from the same
    /// effective weights and produce the same features. Running
    /// statistics are left untouched.
    pub fn data_dependent_init(&mut self, x: &Tensor, eps: f64) -> Result<Vec<InitReport>> {
        let mut h = self.shape_input(x)?;
        if h.shape()[0] < 2 {
            return Err(Error::BatchSize { got: h.shape()[0], need: 2 });
        }
        let mut reports = Vec::new();
        for layer in &mut self.layers {
            h = match layer {
                Layer::Affine(a) => {
                    let dir = a.weights.direction().clone();
                    let mut unit = dir.clone();
                    let fan = a.fan_in();
                    for (u, row) in unit.data_mut().chunks_exact_mut(fan).enumerate() {
                        let n = norm(row);
                        if !(n >= crate::weight_norm::MIN_DIRECTION_NORM) {
                            return Err(Error::DegenerateDirection { unit: u, norm: n });
                        }
                        row.iter_mut().for_each(|v| *v /= n);
                    }
                    let (t_rows, _) = linear_rows(a.kind, &h, &unit)?;
                    let (g, b) = init_scale_bias(&t_rows, eps)?;
                    match &mut a.weights {
                        Weights::Normalized(p) => p.set_g(&g)?,
                        Weights::Plain(w) => {
                            for (u, row) in w.data_mut().chunks_exact_mut(fan).enumerate() {
                                let src = &unit.data()[u * fan..(u + 1) * fan];
                                for (dst, s) in row.iter_mut().zip(src) {
                                    *dst = g[u] * s;
                                }
                            }
                        }
                    }
                    let assigned_b = if a.norm.uses_mean_only() {
                        vec![0.0; b.len()]
                    } else {
                        b
                    };
                    if let Some(bias) = &mut a.bias {
                        bias.data_mut().copy_from_slice(&assigned_b);
                    }
                    if let Some(bn) = &mut a.batch_norm {
                        // with γ = sqrt(σ[w·x]² + eps) the BN output is exactly t − μ[t]
                        let (_, unit_std) = column_stats(&t_rows)?;
                        let eps_bn = bn.eps();
                        let gamma: Vec<f64> = unit_std
                            .data()
                            .iter()
                            .zip(&g)
                            .map(|(s, gi)| ((gi * s).powi(2) + eps_bn).sqrt())
                            .collect();
                        bn.gamma = Tensor::vector(gamma);
                        bn.beta = Tensor::zeros(&[g.len()]);
                    }
                    let mut probe = a.clone();
                    let (out, pre, _, _) = affine_forward(&mut probe, &h, Mode::Train)?;
                    let pre_rows = match a.kind {
                        AffineKind::Conv { .. } => nchw_to_rows(&pre),
                        AffineKind::Dense { .. } => pre,
                    };
                    let (post_mean, post_std) = column_stats(&pre_rows)?;
                    reports.push(InitReport {
                        g_init: Tensor::vector(g),
                        b_init: Tensor::vector(assigned_b),
                        post_mean,
                        post_std,
                    });
                    out
                }
                Layer::Activation(act) => act.forward(&h),
                Layer::MaxPool2x2 => max_pool2x2(&h)?.0,
                Layer::GlobalAvgPool => global_avg_pool(&h)?,
                Layer::GaussianNoise { .. } => h,
            };
        }
        self.commit()?;
        Ok(reports)
    }

    /// Parameters plus running normalization statistics, by name.
    pub fn named_state(&self) -> Vec<(String, Tensor)> {
        let mut out: Vec<(String, Tensor)> = self
            .named_parameters()
            .into_iter()
            .map(|(n, t)| (n, t.clone()))
            .collect();
        for (i, a) in self.affine_layers() {
            if let Some(bn) = &a.batch_norm {
                out.push((format!("L{i}.running_mean"), bn.running_mean().clone()));
                out.push((format!("L{i}.running_var"), bn.running_var().clone()));
            }
            if let Some(mo) = &a.mean_only {
                out.push((format!("L{i}.running_mean"), mo.running_mean().clone()));
            }
        }
        out
    }

    /// Inverse of [`named_state`](Self::named_state); every name must be present
    /// with a matching shape.
    pub fn load_named_state(&mut self, state: &[(String, Tensor)]) -> Result<()> {
        let lookup = |name: &str, like: &Tensor| -> Result<Tensor> {
            let t = state
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, t)| t.clone())
                .ok_or_else(|| Error::Consistency(format!("checkpoint lacks tensor {name}")))?;
            if t.shape() != like.shape() {
                return Err(Error::Consistency(format!(
                    "tensor {name} has shape {:?}, model expects {:?}",
                    t.shape(),
                    like.shape()
                )));
            }
            Ok(t)
        };
        let names: Vec<String> = self.named_parameters().into_iter().map(|(n, _)| n).collect();
        let loaded: Vec<Tensor> = self
            .named_parameters()
            .into_iter()
            .map(|(n, t)| lookup(&n, t))
            .collect::<Result<_>>()?;
        for (dst, src) in self.parameters_mut().into_iter().zip(loaded) {
            *dst = src;
        }
        debug_assert_eq!(names.len(), self.parameters().len());
        for (i, layer) in self.layers.iter_mut().enumerate() {
            let Layer::Affine(a) = layer else { continue };
            if let Some(bn) = &mut a.batch_norm {
                let m = lookup(&format!("L{i}.running_mean"), bn.running_mean())?;
                let v = lookup(&format!("L{i}.running_var"), bn.running_var())?;
                let (rm, rv) = bn.running_mut();
                *rm = m;
                *rv = v;
            }
            if let Some(mo) = &mut a.mean_only {
                let m = lookup(&format!("L{i}.running_mean"), mo.running_mean())?;
                *mo.running_mut() = m;
            }
        }
        self.commit()
    }
}
