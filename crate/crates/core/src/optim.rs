//! First-order update rules, parameter averaging and the learning-rate schedule.
//!
//! Steppers take the trainable tensors as `&mut [&mut Tensor]` (e.g. from
//! [`Model::parameters_mut`](crate::network::Model::parameters_mut)) and a
//! gradient slice in the same order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::tensor::Tensor;

fn check_shapes(params: &[&mut Tensor], grads: &[Tensor]) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::Dimension(format!(
            "{} parameter tensors but {} gradients",
            params.len(),
            grads.len()
        )));
    }
    for (p, g) in params.iter().zip(grads) {
        p.check_same_shape(g)?;
    }
    Ok(())
}

fn check_lr(lr: f64) -> Result<()> {
    if !(lr > 0.0) || !lr.is_finite() {
        return Err(Error::Value(format!("learning rate must be positive, got {lr}")));
    }
    Ok(())
}

fn zeros_like(grads: &[Tensor]) -> Vec<Tensor> {
    grads.iter().map(|g| Tensor::zeros(g.shape())).collect()
}

/// `θ ← θ − lr ∇`.
pub fn sgd_step(params: &mut [&mut Tensor], grads: &[Tensor], lr: f64) -> Result<()> {
    check_lr(lr)?;
    check_shapes(params, grads)?;
    for (p, g) in params.iter_mut().zip(grads) {
        for (x, d) in p.data_mut().iter_mut().zip(g.data()) {
            *x -= lr * d;
        }
    }
    Ok(())
}

/// Velocity buffers for classical momentum.
#[derive(Debug, Clone, Default)]
pub struct MomentumState {
    velocity: Vec<Tensor>,
}

impl MomentumState {
    pub fn velocity(&self) -> &[Tensor] {
        &self.velocity
    }
}

/// `u ← μ u + ∇`, `θ ← θ − lr u`.
pub fn momentum_step(
    params: &mut [&mut Tensor],
    grads: &[Tensor],
    lr: f64,
    momentum: f64,
    state: &mut MomentumState,
) -> Result<()> {
    check_lr(lr)?;
    if !(0.0..1.0).contains(&momentum) {
        return Err(Error::Value(format!("momentum must lie in [0, 1), got {momentum}")));
    }
    check_shapes(params, grads)?;
    if state.velocity.is_empty() {
        state.velocity = zeros_like(grads);
    }
    for ((p, g), u) in params.iter_mut().zip(grads).zip(&mut state.velocity) {
        for ((x, d), ui) in p.data_mut().iter_mut().zip(g.data()).zip(u.data_mut()) {
            *ui = momentum * *ui + d;
            *x -= lr * *ui;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    fn validate(&self) -> Result<()> {
        check_lr(self.lr)?;
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Value(format!("{name} must lie in [0, 1), got {b}")));
            }
        }
        if !(self.eps > 0.0) {
            return Err(Error::Value(format!("eps must be positive, got {}", self.eps)));
        }
        Ok(())
    }
}

/// Moment accumulators shared by Adam (`second` = squared-gradient average)
/// and Adamax (`second` = exponentially weighted infinity norm).
///
/// Bias correction uses the running products of the β's actually applied, which
/// reduces to `1 − βᵗ` when they are held fixed and stays exact when a
/// schedule changes β₁ mid-run.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub config: AdamConfig,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
    step: u64,
    beta1_prod: f64,
    beta2_prod: f64,
}

impl OptimizerState {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            first: Vec::new(),
            second: Vec::new(),
            step: 0,
            beta1_prod: 1.0,
            beta2_prod: 1.0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    fn begin(&mut self, params: &[&mut Tensor], grads: &[Tensor]) -> Result<()> {
        self.config.validate()?;
        check_shapes(params, grads)?;
        if self.first.is_empty() {
            self.first = zeros_like(grads);
            self.second = zeros_like(grads);
        } else if self.first.len() != grads.len() {
            return Err(Error::Dimension("optimizer state does not match parameters".into()));
        }
        self.step += 1;
        self.beta1_prod *= self.config.beta1;
        self.beta2_prod *= self.config.beta2;
        Ok(())
    }
}

pub fn adam_step(params: &mut [&mut Tensor], grads: &[Tensor], state: &mut OptimizerState) -> Result<()> {
    state.begin(params, grads)?;
    let AdamConfig { lr, beta1, beta2, eps } = state.config;
    let c1 = 1.0 - state.beta1_prod;
    let c2 = 1.0 - state.beta2_prod;
    for (((p, g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(&mut state.first)
        .zip(&mut state.second)
    {
        for (((x, &d), mi), vi) in p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut())
            .zip(v.data_mut())
        {
            *mi = beta1 * *mi + (1.0 - beta1) * d;
            *vi = beta2 * *vi + (1.0 - beta2) * d * d;
            let m_hat = *mi / c1;
            let v_hat = *vi / c2;
            *x -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// Adam's infinity-norm variant: `u ← max(β₂ u, |∇|)`,
/// `θ ← θ − (lr / (1 − β₁ᵗ)) m / u` (coordinates with `u = 0` are left alone).
pub fn adamax_step(params: &mut [&mut Tensor], grads: &[Tensor], state: &mut OptimizerState) -> Result<()> {
    state.begin(params, grads)?;
    let AdamConfig { lr, beta1, beta2, .. } = state.config;
    let step_size = lr / (1.0 - state.beta1_prod);
    for (((p, g), m), u) in params
        .iter_mut()
        .zip(grads)
        .zip(&mut state.first)
        .zip(&mut state.second)
    {
        for (((x, &d), mi), ui) in p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut())
            .zip(u.data_mut())
        {
            *mi = beta1 * *mi + (1.0 - beta1) * d;
            *ui = (beta2 * *ui).max(d.abs());
            if *ui > 0.0 {
                *x -= step_size * *mi / *ui;
            }
        }
    }
    Ok(())
}

/// Polyak averaging: `shadow ← decay·shadow + (1 − decay)·θ`, seeded with
/// the parameters on the first update.
#[derive(Debug, Clone)]
pub struct EmaState {
    decay: f64,
    shadow: Vec<Tensor>,
}

impl EmaState {
    pub fn new(decay: f64) -> Result<Self> {
        if !(decay > 0.0 && decay < 1.0) {
            return Err(Error::Value(format!("EMA decay must lie in (0, 1), got {decay}")));
        }
        Ok(Self {
            decay,
            shadow: Vec::new(),
        })
    }

    /// Decay that averages over roughly `epochs` epochs.
    pub fn decay_for(epochs: f64, steps_per_epoch: usize) -> f64 {
        1.0 - 1.0 / (epochs * steps_per_epoch as f64)
    }

    pub fn decay(&self) -> f64 {
        self.decay
    }

    pub fn shadow(&self) -> &[Tensor] {
        &self.shadow
    }
}

pub fn ema_update(ema: &mut EmaState, params: &[&Tensor]) -> Result<()> {
    if ema.shadow.is_empty() {
        ema.shadow = params.iter().map(|&p| p.clone()).collect();
        return Ok(());
    }
    if ema.shadow.len() != params.len() {
        return Err(Error::Dimension("EMA shadow does not match parameters".into()));
    }
    let d = ema.decay;
    for (s, p) in ema.shadow.iter_mut().zip(params) {
        s.check_same_shape(p)?;
        for (si, pi) in s.data_mut().iter_mut().zip(p.data()) {
            *si = d * *si + (1.0 - d) * pi;
        }
    }
    Ok(())
}

/// Two-phase schedule: `(base_lr, 0.9)` for the first half of training, then
/// momentum 0.5 and a learning rate decaying linearly towards zero.
pub fn lr_schedule(epoch: usize, total_epochs: usize, base_lr: f64) -> Result<(f64, f64)> {
    if epoch >= total_epochs {
        return Err(Error::Value(format!(
            "epoch {epoch} outside schedule of {total_epochs} epochs"
        )));
    }
    let half = total_epochs / 2;
    if epoch < half {
        Ok((base_lr, 0.9))
    } else {
        let remaining = (total_epochs - epoch) as f64 / (total_epochs - half) as f64;
        Ok((base_lr * remaining, 0.5))
    }
}

/// Optimizer selection used by experiment configs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum OptimizerKind {
    Sgd,
    Momentum {
        #[serde(default = "default_momentum")]
        momentum: f64,
    },
    Adam,
    Adamax,
}

fn default_momentum() -> f64 {
    0.9
}

/// A configured stepper with its state.
#[derive(Debug, Clone)]
pub enum Optimizer {
    Sgd { lr: f64 },
    Momentum { lr: f64, momentum: f64, state: MomentumState },
    Adam(OptimizerState),
    Adamax(OptimizerState),
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64) -> Self {
        match kind {
            OptimizerKind::Sgd => Optimizer::Sgd { lr },
            OptimizerKind::Momentum { momentum } => Optimizer::Momentum {
                lr,
                momentum,
                state: MomentumState::default(),
            },
            OptimizerKind::Adam => Optimizer::Adam(OptimizerState::new(AdamConfig::new(lr))),
            OptimizerKind::Adamax => Optimizer::Adamax(OptimizerState::new(AdamConfig::new(lr))),
        }
    }

    /// Sets the learning rate and, where meaningful, momentum/β₁.
    pub fn set_schedule(&mut self, lr: f64, momentum: f64) {
        match self {
            Optimizer::Sgd { lr: l } => *l = lr,
            Optimizer::Momentum { lr: l, momentum: m, .. } => {
                *l = lr;
                *m = momentum;
            }
            Optimizer::Adam(s) | Optimizer::Adamax(s) => {
                s.config.lr = lr;
                s.config.beta1 = momentum;
            }
        }
    }

    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor]) -> Result<()> {
        match self {
            Optimizer::Sgd { lr } => sgd_step(params, grads, *lr),
            Optimizer::Momentum { lr, momentum, state } => momentum_step(params, grads, *lr, *momentum, state),
            Optimizer::Adam(s) => adam_step(params, grads, s),
            Optimizer::Adamax(s) => adamax_step(params, grads, s),
        }
    }
}
