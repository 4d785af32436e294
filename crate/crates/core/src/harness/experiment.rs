//! Single training runs: data loading, init, the epoch loop and CSV rows.

use std::fs::{self, File};
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use super::config::{DatasetConfig, ExperimentConfig, Schedule};
use super::idx::load_idx;
use super::synth::{synth_dataset, SynthSpec};
use crate::error::{Error, Result};
use crate::network::{argmax_rows, build_model, softmax_xent, Model, NormMode};
use crate::normalization::INIT_EPS;
use crate::numerics::rng::RngStream;
use crate::numerics::tensor::Tensor;
use crate::numerics::whiten::zca_whiten;
use crate::optim::{lr_schedule, Optimizer};
use crate::Mode;

pub const CSV_HEADER: &str = "mode,lr,epoch,train_loss,train_error,test_error,g_over_v,v_norm,wall_seconds";

/// Examples per evaluation chunk.
const EVAL_CHUNK: usize = 500;

/// Seed-derived stream tags, so each consumer of randomness is independent.
const TAG_PARAMS: u64 = 1;
const TAG_INIT_BATCH: u64 = 2;
const TAG_SHUFFLE: u64 = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub train_x: Tensor,
    pub train_y: Vec<usize>,
    pub test_x: Tensor,
    pub test_y: Vec<usize>,
    pub classes: usize,
}

impl Dataset {
    pub fn new(train_x: Tensor, train_y: Vec<usize>, test_x: Tensor, test_y: Vec<usize>) -> Result<Self> {
        for (x, y, split) in [(&train_x, &train_y, "train"), (&test_x, &test_y, "test")] {
            if x.shape()[0] != y.len() {
                return Err(Error::Consistency(format!(
                    "{split} split has {} examples but {} labels",
                    x.shape()[0],
                    y.len()
                )));
            }
        }
        if train_x.shape()[1..] != test_x.shape()[1..] {
            return Err(Error::Consistency("train and test examples differ in shape".into()));
        }
        let classes = train_y.iter().chain(&test_y).max().map_or(0, |m| m + 1);
        Ok(Self {
            train_x,
            train_y,
            test_x,
            test_y,
            classes,
        })
    }

    pub fn example_shape(&self) -> &[usize] {
        &self.train_x.shape()[1..]
    }

    pub fn train_len(&self) -> usize {
        self.train_y.len()
    }
}

fn take_rows(x: Tensor, n: usize) -> Result<Tensor> {
    if n >= x.shape()[0] {
        return Ok(x);
    }
    let per = x.len() / x.shape()[0];
    let mut shape = x.shape().to_vec();
    shape[0] = n;
    Tensor::new(shape, x.into_data()[..n * per].to_vec())
}

pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    let mut data = match &cfg.dataset {
        DatasetConfig::Synthetic { train, test_n } => {
            let all = SynthSpec {
                n: train.n + test_n,
                ..train.clone()
            };
            let (x, mut train_y) = synth_dataset(cfg.seed, &all)?;
            let test_y = train_y.split_off(train.n);
            let mut data = x.into_data();
            let test_data = data.split_off(train.n * train.dim);
            Dataset::new(
                Tensor::new(vec![train.n, train.dim], data)?,
                train_y,
                Tensor::new(vec![*test_n, train.dim], test_data)?,
                test_y,
            )?
        }
        DatasetConfig::Idx {
            train_images,
            train_labels,
            test_images,
            test_labels,
            subset,
        } => {
            let (mut train_x, mut train_y) = load_idx(train_images, train_labels)?;
            let (mut test_x, mut test_y) = load_idx(test_images, test_labels)?;
            if let Some(k) = *subset {
                train_x = take_rows(train_x, k)?;
                train_y.truncate(k);
                test_x = take_rows(test_x, k)?;
                test_y.truncate(k);
            }
            Dataset::new(train_x, train_y, test_x, test_y)?
        }
    };
    if let Some(eps) = cfg.whiten_eps {
        let shape_tr = data.train_x.shape().to_vec();
        let shape_te = data.test_x.shape().to_vec();
        let w = zca_whiten(&data.train_x.flatten_rows(), eps)?;
        data.test_x = w.apply(&data.test_x.flatten_rows())?.reshape(&shape_te)?;
        data.train_x = w.xw.reshape(&shape_tr)?;
    }
    Ok(data)
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRow {
    pub mode: NormMode,
    pub lr: f64,
    pub epoch: usize,
    pub train_loss: f64,
    pub train_error: f64,
    pub test_error: f64,
    pub g_over_v: f64,
    pub v_norm: f64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub mode: NormMode,
    pub lr: f64,
    /// Loss and error on the training set right after initialization.
    pub initial_train_loss: f64,
    pub initial_train_error: f64,
    pub rows: Vec<EpochRow>,
    /// `(epoch, reason)` if training hit a non-finite value.
    pub diverged: Option<(usize, String)>,
}

impl RunRecord {
    pub fn is_diverged(&self) -> bool {
        self.diverged.is_some()
    }

    pub fn final_train_loss(&self) -> Option<f64> {
        self.rows.last().map(|r| r.train_loss)
    }

    pub fn final_train_error(&self) -> Option<f64> {
        self.rows.last().map(|r| r.train_error)
    }

    /// Finished without diverging and ended below its initial training loss.
    pub fn is_loss_decreasing(&self) -> bool {
        !self.is_diverged() && self.final_train_loss().is_some_and(|l| l < self.initial_train_loss)
    }

    /// First epoch whose train error is at or below `threshold`.
    pub fn epochs_to(&self, threshold: f64) -> Option<usize> {
        self.rows.iter().find(|r| r.train_error <= threshold).map(|r| r.epoch)
    }
}

/// Mean cross-entropy and error rate, in evaluation mode.
pub fn evaluate(model: &Model, x: &Tensor, y: &[usize]) -> Result<(f64, f64)> {
    let n = y.len();
    let per = x.len() / n;
    let mut loss = 0.0;
    let mut wrong = 0usize;
    for start in (0..n).step_by(EVAL_CHUNK) {
        let end = (start + EVAL_CHUNK).min(n);
        let xb = batch(x, per, &(start..end).collect::<Vec<_>>())?;
        let logits = model.predict(&xb)?;
        let (l, _) = softmax_xent(&logits, &y[start..end])?;
        loss += l * (end - start) as f64;
        wrong += argmax_rows(&logits).iter().zip(&y[start..end]).filter(|(p, t)| p != t).count();
    }
    Ok((loss / n as f64, wrong as f64 / n as f64))
}

/// Loss and error right after init. Models with batch statistics have no
/// running statistics yet, so they are scored with full-batch statistics.
fn initial_metrics(model: &Model, mode: NormMode, x: &Tensor, y: &[usize]) -> Result<(f64, f64)> {
    if !mode.uses_batch_stats() {
        return evaluate(model, x, y);
    }
    let mut probe = model.clone();
    let (_, logits) = probe.forward(x, Mode::Train)?;
    let (loss, _) = softmax_xent(&logits, y)?;
    let wrong = argmax_rows(&logits).iter().zip(y).filter(|(p, t)| p != t).count();
    Ok((loss, wrong as f64 / y.len() as f64))
}

fn batch(x: &Tensor, per: usize, idx: &[usize]) -> Result<Tensor> {
    let mut data = Vec::with_capacity(idx.len() * per);
    for &i in idx {
        data.extend_from_slice(&x.data()[i * per..(i + 1) * per]);
    }
    let mut shape = x.shape().to_vec();
    shape[0] = idx.len();
    Tensor::new(shape, data)
}

fn is_numerical(e: &Error) -> bool {
    matches!(e, Error::Value(_) | Error::DegenerateDirection { .. })
}

/// Builds the model for `mode` from the config seed and applies
/// data-dependent initialization, so every mode starts from the same
/// effective weights.
pub fn init_model(cfg: &ExperimentConfig, data: &Dataset, mode: NormMode) -> Result<Model> {
    let (input_shape, specs) = cfg.model_specs(mode, data.example_shape(), data.classes)?;
    let root = RngStream::new(cfg.seed);
    let mut model = build_model(&input_shape, &specs, root.derive(TAG_PARAMS))?;
    let n = data.train_len();
    let mut order: Vec<usize> = (0..n).collect();
    root.derive(TAG_INIT_BATCH).shuffle(&mut order);
    order.truncate(cfg.init_batch_size.min(n));
    let per = data.train_x.len() / n;
    let mut xb = batch(&data.train_x, per, &order)?;
    let mut shape = vec![order.len()];
    shape.extend_from_slice(&input_shape);
    xb = xb.reshape(&shape)?;
    model.data_dependent_init(&xb, INIT_EPS)?;
    Ok(model)
}

/// Trains one `(mode, lr)` cell. Non-finite values end the run early and are
/// reported in [`RunRecord::diverged`] rather than as an error.
pub fn train_run(cfg: &ExperimentConfig, data: &Dataset, mode: NormMode, lr: f64) -> Result<(RunRecord, Model)> {
    let mut model = init_model(cfg, data, mode)?;
    let n = data.train_len();
    let mut shape = vec![0];
    shape.extend_from_slice(model.input_shape());
    let reshape = |x: &Tensor| -> Result<Tensor> {
        let mut s = shape.clone();
        s[0] = x.shape()[0];
        x.clone().reshape(&s)
    };
    let train_x = reshape(&data.train_x)?;
    let test_x = reshape(&data.test_x)?;
    let per = train_x.len() / n;

    let (initial_train_loss, initial_train_error) = initial_metrics(&model, mode, &train_x, &data.train_y)?;
    let mut record = RunRecord {
        mode,
        lr,
        initial_train_loss,
        initial_train_error,
        rows: Vec::with_capacity(cfg.epochs),
        diverged: None,
    };
    let mut optimizer = Optimizer::new(cfg.optimizer, lr);
    let mut shuffle = RngStream::new(cfg.seed).derive(TAG_SHUFFLE);
    let mut order: Vec<usize> = (0..n).collect();
    let min_batch = if mode.uses_batch_stats() { 2 } else { 1 };
    let start = Instant::now();

    'epochs: for epoch in 0..cfg.epochs {
        if cfg.schedule == Schedule::HalfDecay {
            let (l, m) = lr_schedule(epoch, cfg.epochs, lr)?;
            optimizer.set_schedule(l, m);
        }
        shuffle.shuffle(&mut order);
        for chunk in order.chunks(cfg.batch_size) {
            if chunk.len() < min_batch {
                continue;
            }
            let xb = batch(&train_x, per, chunk)?;
            let labels: Vec<usize> = chunk.iter().map(|&i| data.train_y[i]).collect();
            let (cache, logits) = model.forward(&xb, Mode::Train)?;
            let (loss, grad) = softmax_xent(&logits, &labels)?;
            if !loss.is_finite() {
                record.diverged = Some((epoch + 1, format!("training loss became {loss}")));
                break 'epochs;
            }
            let grads = model.backward(&cache, &grad)?;
            optimizer.step(&mut model.parameters_mut(), &grads.tensors)?;
            if let Err(e) = model.commit() {
                if is_numerical(&e) {
                    record.diverged = Some((epoch + 1, e.to_string()));
                    break 'epochs;
                }
                return Err(e);
            }
        }
        let (train_loss, train_error) = evaluate(&model, &train_x, &data.train_y)?;
        let (_, test_error) = evaluate(&model, &test_x, &data.test_y)?;
        if !train_loss.is_finite() {
            record.diverged = Some((epoch + 1, format!("evaluation loss became {train_loss}")));
            break;
        }
        let (g_over_v, v_norm) = model.scale_stats();
        record.rows.push(EpochRow {
            mode,
            lr,
            epoch: epoch + 1,
            train_loss,
            train_error,
            test_error,
            g_over_v,
            v_norm,
            wall_seconds: start.elapsed().as_secs_f64(),
        });
    }
    Ok((record, model))
}

pub fn write_rows<'a, W: Write>(out: W, rows: impl IntoIterator<Item = &'a EpochRow>) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_HEADER.split(','))
        .map_err(|e| Error::Io(e.into()))?;
    for row in rows {
        w.serialize(row).map_err(|e| Error::Io(e.into()))?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn create_file(path: &Path) -> Result<File> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(File::create(path)?)
}

/// One run with `norm_mode` and the first learning rate of the grid; writes
/// the per-epoch CSV to `output` when set. A diverged run still writes its
/// rows, then returns [`Error::Divergence`].
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunRecord> {
    cfg.validate()?;
    let data = load_dataset(cfg)?;
    let (record, _) = train_run(cfg, &data, cfg.norm_mode, cfg.lr_grid[0])?;
    if let Some(path) = &cfg.output {
        write_rows(create_file(path)?, &record.rows)?;
    }
    if let Some((epoch, detail)) = &record.diverged {
        return Err(Error::Divergence {
            epoch: *epoch,
            detail: detail.clone(),
        });
    }
    Ok(record)
}
