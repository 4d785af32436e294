//! JSON experiment configuration.
//!
//! ```json
//! {
//!   "dataset": { "type": "idx", "train_images": "data/mnist-1k/train-images-idx3-ubyte", ... },
//!   "model": "mnist-mlp",
//!   "optimizer": { "type": "adam" },
//!   "lr_grid": [0.0003, 0.001, 0.003, 0.01],
//!   "epochs": 30,
//!   "seed": 0
//! }
//! ```
//!
//! `model` is a named architecture (`mnist-mlp`, `small-conv`,
//! `convpool-cnn-c`), `{"mlp": [hidden sizes]}` sized from the data, or an
//! inline `{"input_shape": [...], "layers": [...]}` list. The normalization
//! mode of every affine layer is overridden by the mode being run.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::synth::SynthSpec;
use crate::error::{Error, Result};
use crate::network::{Activation, LayerSpec, NormMode};
use crate::optim::OptimizerKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    Synthetic {
        train: SynthSpec,
        test_n: usize,
    },
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
        /// Keep only the first `subset` examples of each split.
        #[serde(default)]
        subset: Option<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelConfig {
    Named(String),
    Mlp { mlp: Vec<usize> },
    Inline { input_shape: Vec<usize>, layers: Vec<LayerSpec> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    Constant,
    /// Fixed lr and momentum/β₁ 0.9 for the first half, then 0.5 with the lr
    /// decaying linearly to zero.
    #[default]
    HalfDecay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    pub model: ModelConfig,
    /// Mode for single runs (`train`).
    #[serde(default = "default_norm_mode")]
    pub norm_mode: NormMode,
    /// Modes swept by `compare`.
    #[serde(default = "all_modes")]
    pub modes: Vec<NormMode>,
    #[serde(default = "default_optimizer")]
    pub optimizer: OptimizerKind,
    #[serde(default = "default_grid")]
    pub lr_grid: Vec<f64>,
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_batch")]
    pub init_batch_size: usize,
    #[serde(default)]
    pub schedule: Schedule,
    /// ZCA-whiten inputs with this eps (fitted on the training split).
    #[serde(default)]
    pub whiten_eps: Option<f64>,
    /// Train-error level used to rank learning rates in comparison summaries.
    #[serde(default = "default_threshold")]
    pub error_threshold: f64,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

fn default_norm_mode() -> NormMode {
    NormMode::WeightNorm
}

fn all_modes() -> Vec<NormMode> {
    NormMode::ALL.to_vec()
}

fn default_optimizer() -> OptimizerKind {
    OptimizerKind::Adam
}

fn default_grid() -> Vec<f64> {
    vec![0.0003, 0.001, 0.003, 0.01]
}

fn default_batch() -> usize {
    100
}

fn default_threshold() -> f64 {
    0.05
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative dataset paths resolve against its directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        if let Some(base) = path.parent() {
            cfg.rebase(base);
        }
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        if let DatasetConfig::Idx {
            train_images,
            train_labels,
            test_images,
            test_labels,
            ..
        } = &mut self.dataset
        {
            for p in [train_images, train_labels, test_images, test_labels] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lr_grid.is_empty() {
            return Err(Error::Config("lr_grid must not be empty".into()));
        }
        if let Some(lr) = self.lr_grid.iter().find(|lr| !(**lr > 0.0 && lr.is_finite())) {
            return Err(Error::Config(format!("learning rate {lr} must be positive")));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.modes.is_empty() {
            return Err(Error::Config("modes must not be empty".into()));
        }
        let batch_stats = self.modes.iter().chain([&self.norm_mode]).any(|m| m.uses_batch_stats());
        if self.batch_size == 0 || (batch_stats && self.batch_size < 2) {
            return Err(Error::Config(format!(
                "batch_size {} too small for batch-normalized modes",
                self.batch_size
            )));
        }
        if self.init_batch_size < 2 {
            return Err(Error::Config("init_batch_size must be at least 2".into()));
        }
        if !(0.0..=1.0).contains(&self.error_threshold) {
            return Err(Error::Config("error_threshold must lie in [0, 1]".into()));
        }
        if let Some(eps) = self.whiten_eps {
            if !(eps > 0.0) {
                return Err(Error::Config("whiten_eps must be positive".into()));
            }
        }
        if let DatasetConfig::Synthetic { test_n, .. } = &self.dataset {
            if *test_n == 0 {
                return Err(Error::Config("test_n must be at least 1".into()));
            }
        }
        Ok(())
    }

    /// Layer list and input shape for `mode`, given the per-example shape and
    /// class count of the data.
    pub fn model_specs(
        &self,
        mode: NormMode,
        data_shape: &[usize],
        classes: usize,
    ) -> Result<(Vec<usize>, Vec<LayerSpec>)> {
        let (input_shape, specs) = match &self.model {
            ModelConfig::Named(name) => named_model(name, mode)?,
            ModelConfig::Mlp { mlp } => {
                let d: usize = data_shape.iter().product();
                let mut specs = Vec::new();
                let mut fan = d;
                for &h in mlp {
                    specs.push(LayerSpec::dense(fan, h, mode, Activation::Relu));
                    fan = h;
                }
                specs.push(LayerSpec::dense(fan, classes, mode, Activation::Identity));
                (vec![d], specs)
            }
            ModelConfig::Inline { input_shape, layers } => (
                input_shape.clone(),
                layers.iter().cloned().map(|l| l.with_norm(mode)).collect(),
            ),
        };
        let want: usize = input_shape.iter().product();
        let have: usize = data_shape.iter().product();
        if want != have {
            return Err(Error::Config(format!(
                "model expects inputs of shape {input_shape:?}, data examples have shape {data_shape:?}"
            )));
        }
        Ok((input_shape, specs))
    }

    /// Output path with `suffix` inserted before the extension
    /// (`runs/out.csv` → `runs/out_summary.csv`).
    pub fn output_with_suffix(&self, suffix: &str) -> Option<PathBuf> {
        let out = self.output.as_ref()?;
        let stem = out.file_stem()?.to_string_lossy();
        let name = match out.extension() {
            Some(ext) => format!("{stem}{suffix}.{}", ext.to_string_lossy()),
            None => format!("{stem}{suffix}"),
        };
        Some(out.with_file_name(name))
    }
}

/// Named architectures with every affine layer set to `mode`.
pub fn named_model(name: &str, mode: NormMode) -> Result<(Vec<usize>, Vec<LayerSpec>)> {
    let leaky = Activation::leaky();
    match name {
        "mnist-mlp" => Ok((
            vec![784],
            vec![
                LayerSpec::dense(784, 128, mode, Activation::Relu),
                LayerSpec::dense(128, 10, mode, Activation::Identity),
            ],
        )),
        "small-conv" => Ok((
            vec![1, 28, 28],
            vec![
                LayerSpec::conv(1, 8, 3, 1, mode, leaky),
                LayerSpec::MaxPool2x2,
                LayerSpec::conv(8, 16, 3, 1, mode, leaky),
                LayerSpec::MaxPool2x2,
                LayerSpec::conv(16, 10, 1, 0, mode, Activation::Identity),
                LayerSpec::GlobalAvgPool,
            ],
        )),
        "convpool-cnn-c" => {
            let mut l = vec![LayerSpec::GaussianNoise { sigma: 0.15 }];
            l.push(LayerSpec::conv(3, 96, 3, 1, mode, leaky));
            l.push(LayerSpec::conv(96, 96, 3, 1, mode, leaky));
            l.push(LayerSpec::conv(96, 96, 3, 1, mode, leaky));
            l.push(LayerSpec::MaxPool2x2);
            l.push(LayerSpec::conv(96, 192, 3, 1, mode, leaky));
            l.push(LayerSpec::conv(192, 192, 3, 1, mode, leaky));
            l.push(LayerSpec::conv(192, 192, 3, 1, mode, leaky));
            l.push(LayerSpec::MaxPool2x2);
            l.push(LayerSpec::conv(192, 192, 3, 0, mode, leaky));
            l.push(LayerSpec::conv(192, 192, 1, 0, mode, leaky));
            l.push(LayerSpec::conv(192, 192, 1, 0, mode, leaky));
            l.push(LayerSpec::GlobalAvgPool);
            l.push(LayerSpec::dense(192, 10, mode, Activation::Identity));
            Ok((vec![3, 32, 32], l))
        }
        other => Err(Error::Config(format!(
            "unknown model {other:?} (expected mnist-mlp, small-conv or convpool-cnn-c)"
        ))),
    }
}
