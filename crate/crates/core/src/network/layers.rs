use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ops::Activation;
use crate::error::{Error, Result};
use crate::normalization::{BatchNormState, MeanOnlyBNState, BN_EPS, DEFAULT_MOMENTUM};
use crate::numerics::tensor::Tensor;
use crate::weight_norm::WeightNormParam;

/// How an affine layer parameterizes and normalizes its pre-activations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormMode {
    /// Train `w` and `b` directly.
    Standard,
    /// `w` followed by full batch normalization (γ, β replace the bias).
    BatchNorm,
    /// `w = g v/‖v‖`, bias `b`.
    WeightNorm,
    /// Weight normalization with mean-only batch normalization.
    WeightNormMeanOnlyBn,
    /// Plain `w` with mean-only batch normalization.
    MeanOnlyBn,
}

impl NormMode {
    pub const ALL: [NormMode; 5] = [
        NormMode::Standard,
        NormMode::BatchNorm,
        NormMode::WeightNorm,
        NormMode::WeightNormMeanOnlyBn,
        NormMode::MeanOnlyBn,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            NormMode::Standard => "standard",
            NormMode::BatchNorm => "batch_norm",
            NormMode::WeightNorm => "weight_norm",
            NormMode::WeightNormMeanOnlyBn => "weight_norm_mean_only_bn",
            NormMode::MeanOnlyBn => "mean_only_bn",
        }
    }

    pub fn uses_weight_norm(&self) -> bool {
        matches!(self, NormMode::WeightNorm | NormMode::WeightNormMeanOnlyBn)
    }

    pub fn uses_mean_only(&self) -> bool {
        matches!(self, NormMode::WeightNormMeanOnlyBn | NormMode::MeanOnlyBn)
    }

    /// Modes whose forward pass couples the examples of a minibatch.
    pub fn uses_batch_stats(&self) -> bool {
        self.uses_mean_only() || *self == NormMode::BatchNorm
    }
}

impl fmt::Display for NormMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NormMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        NormMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown norm mode {s:?}")))
    }
}

/// Declarative description of one layer with explicit geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LayerSpec {
    Dense {
        fan_in: usize,
        fan_out: usize,
        norm: NormMode,
        activation: Activation,
        #[serde(default)]
        log_scale: bool,
    },
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        #[serde(default = "one")]
        stride: usize,
        #[serde(default)]
        pad: usize,
        norm: NormMode,
        activation: Activation,
        #[serde(default)]
        log_scale: bool,
    },
    Activation {
        activation: Activation,
    },
    MaxPool2x2,
    GlobalAvgPool,
    GaussianNoise {
        sigma: f64,
    },
}

fn one() -> usize {
    1
}

impl LayerSpec {
    pub fn dense(fan_in: usize, fan_out: usize, norm: NormMode, activation: Activation) -> Self {
        LayerSpec::Dense {
            fan_in,
            fan_out,
            norm,
            activation,
            log_scale: false,
        }
    }

    pub fn conv(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        pad: usize,
        norm: NormMode,
        activation: Activation,
    ) -> Self {
        LayerSpec::Conv2d {
            in_channels,
            out_channels,
            kernel,
            stride: 1,
            pad,
            norm,
            activation,
            log_scale: false,
        }
    }

    /// Same layer with its normalization mode replaced (no-op for parameter-free layers).
    pub fn with_norm(mut self, mode: NormMode) -> Self {
        match &mut self {
            LayerSpec::Dense { norm, .. } | LayerSpec::Conv2d { norm, .. } => *norm = mode,
            _ => {}
        }
        self
    }
}

/// Weight storage of an affine layer.
#[derive(Debug, Clone)]
pub enum Weights {
    Plain(Tensor),
    Normalized(WeightNormParam),
}

impl Weights {
    pub fn effective(&self) -> Tensor {
        match self {
            Weights::Plain(w) => w.clone(),
            Weights::Normalized(p) => p.compose().w,
        }
    }

    /// The unnormalized direction tensor (`v`, or `w` itself when plain).
    pub fn direction(&self) -> &Tensor {
        match self {
            Weights::Plain(w) => w,
            Weights::Normalized(p) => p.v(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AffineKind {
    Dense {
        fan_in: usize,
        fan_out: usize,
    },
    Conv {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    },
}

/// A dense or convolutional layer `y = φ(norm(w·x) + b)`.
#[derive(Debug, Clone)]
pub struct AffineLayer {
    pub kind: AffineKind,
    pub norm: NormMode,
    pub activation: Activation,
    pub weights: Weights,
    pub bias: Option<Tensor>,
    pub batch_norm: Option<BatchNormState>,
    pub mean_only: Option<MeanOnlyBNState>,
}

impl AffineLayer {
    /// `direction` has shape `[units, ...]`; `g = 1` and `b = 0`.
    pub(crate) fn new(
        kind: AffineKind,
        norm: NormMode,
        activation: Activation,
        direction: Tensor,
        log_scale: bool,
    ) -> Result<Self> {
        let units = direction.shape()[0];
        let weights = if norm.uses_weight_norm() {
            let p = if log_scale {
                WeightNormParam::with_log_scale(direction, Tensor::zeros(&[units]))?
            } else {
                WeightNormParam::new(direction, Tensor::full(&[units], 1.0))?
            };
            Weights::Normalized(p)
        } else {
            if log_scale {
                return Err(Error::Build(format!(
                    "log-scale parameterization needs weight normalization, layer uses {norm}"
                )));
            }
            Weights::Plain(direction)
        };
        let bias = (norm != NormMode::BatchNorm).then(|| Tensor::zeros(&[units]));
        let batch_norm = (norm == NormMode::BatchNorm)
            .then(|| BatchNormState::new(units, DEFAULT_MOMENTUM, BN_EPS))
            .transpose()?;
        let mean_only = norm
            .uses_mean_only()
            .then(|| MeanOnlyBNState::new(units, DEFAULT_MOMENTUM))
            .transpose()?;
        Ok(Self {
            kind,
            norm,
            activation,
            weights,
            bias,
            batch_norm,
            mean_only,
        })
    }

    pub fn units(&self) -> usize {
        self.weights.direction().shape()[0]
    }

    pub fn fan_in(&self) -> usize {
        let d = self.weights.direction();
        d.len() / d.shape()[0]
    }

    pub fn weight_norm(&self) -> Option<&WeightNormParam> {
        match &self.weights {
            Weights::Normalized(p) => Some(p),
            Weights::Plain(_) => None,
        }
    }

    /// Trainable tensors in a fixed order: weights (`w` or `v`, scale), bias, γ, β.
    pub(crate) fn params(&self) -> Vec<(&'static str, &Tensor)> {
        let mut out = Vec::with_capacity(5);
        match &self.weights {
            Weights::Plain(w) => out.push(("w", w)),
            Weights::Normalized(p) => {
                out.push(("v", p.v()));
                out.push((if p.is_log_scale() { "s" } else { "g" }, p.scale_param()));
            }
        }
        if let Some(b) = &self.bias {
            out.push(("b", b));
        }
        if let Some(bn) = &self.batch_norm {
            out.push(("gamma", &bn.gamma));
            out.push(("beta", &bn.beta));
        }
        out
    }

    pub(crate) fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = Vec::with_capacity(5);
        match &mut self.weights {
            Weights::Plain(w) => out.push(w),
            Weights::Normalized(p) => {
                let (v, s) = p.trainable_mut();
                out.push(v);
                out.push(s);
            }
        }
        if let Some(b) = &mut self.bias {
            out.push(b);
        }
        if let Some(bn) = &mut self.batch_norm {
            out.push(&mut bn.gamma);
            out.push(&mut bn.beta);
        }
        out
    }

    /// Mean `g/‖v‖` and mean `‖v‖` over units; a plain layer reads as
    /// `v = w`, `g = ‖w‖`.
    pub fn scale_stats(&self) -> (f64, f64) {
        let units = self.units() as f64;
        match &self.weights {
            Weights::Normalized(p) => {
                let ratio: f64 = p.g().data().iter().zip(p.norms()).map(|(g, n)| g / n).sum();
                let norm: f64 = p.norms().iter().sum();
                (ratio / units, norm / units)
            }
            Weights::Plain(w) => {
                let norm: f64 = w.rows().map(crate::numerics::tensor::norm).sum();
                (1.0, norm / units)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn norm_mode_names_round_trip() {
        for m in NormMode::ALL {
            assert_eq!(m.name().parse::<NormMode>().unwrap(), m);
            let json = serde_json::to_string(&m).unwrap();
            assert_eq!(json, format!("\"{}\"", m.name()));
        }
        assert!("bogus".parse::<NormMode>().is_err());
    }

    #[test]
    fn layer_spec_json() {
        let spec = LayerSpec::dense(3, 2, NormMode::WeightNorm, Activation::Relu);
        let json = serde_json::to_string(&spec).unwrap();
        assert_eq!(serde_json::from_str::<LayerSpec>(&json).unwrap(), spec);
        let conv: LayerSpec = serde_json::from_str(
            r#"{"kind":"conv2d","in_channels":1,"out_channels":4,"kernel":3,"norm":"batch_norm","activation":{"type":"leaky_relu","slope":0.1}}"#,
        )
        .unwrap();
        assert!(matches!(conv, LayerSpec::Conv2d { stride: 1, pad: 0, .. }));
    }

    #[test]
    fn parameter_layout_per_mode() {
        let dir = Tensor::full(&[2, 3], 0.5);
        let kind = AffineKind::Dense { fan_in: 3, fan_out: 2 };
        let names = |m: NormMode| -> Vec<&'static str> {
            AffineLayer::new(kind, m, Activation::Identity, dir.clone(), false)
                .unwrap()
                .params()
                .into_iter()
                .map(|(n, _)| n)
                .collect()
        };
        assert_eq!(names(NormMode::Standard), ["w", "b"]);
        assert_eq!(names(NormMode::BatchNorm), ["w", "gamma", "beta"]);
        assert_eq!(names(NormMode::WeightNorm), ["v", "g", "b"]);
        assert_eq!(names(NormMode::WeightNormMeanOnlyBn), ["v", "g", "b"]);
        assert_eq!(names(NormMode::MeanOnlyBn), ["w", "b"]);
        assert!(AffineLayer::new(kind, NormMode::Standard, Activation::Identity, dir, true).is_err());
    }
}
