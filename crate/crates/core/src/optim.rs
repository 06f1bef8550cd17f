//! Online stochastic gradient descent with momentum, two L2 pull channels
//! (weight decay and an explicit regularization coefficient), and a
//! plateau-triggered learning-rate annealer.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::nn::{ActivationKind, LayerParams, ModelState};
use crate::tensor::Tensor;

/// Learning-rate schedule. `Plateau` divides the rate by 10 whenever the
/// best test error has not improved for `patience` consecutive epochs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnnealPolicy {
    Off,
    Plateau { patience: u32 },
}

/// Every knob of a training run. `weight_decay` and `l2_reg` act
/// identically in the update (both are L2 pulls added to the gradient) but
/// are configured separately so their experiments stay independent.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub l2_reg: f64,
    pub epochs: u32,
    pub seed: u64,
    pub activation: ActivationKind,
    pub anneal: AnnealPolicy,
    pub train_count: usize,
    pub test_count: usize,
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        TrainConfig {
            learning_rate: 0.0001,
            momentum: 0.0,
            weight_decay: 0.0,
            l2_reg: 0.0,
            epochs: 20,
            seed: 42,
            activation: ActivationKind::Tanh,
            anneal: AnnealPolicy::Off,
            train_count: 2000,
            test_count: 1000,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "eta must be non-negative and finite, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidConfig(format!(
                "momentum must be in [0, 1), got {}",
                self.momentum
            )));
        }
        if self.weight_decay < 0.0 || !self.weight_decay.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "decay must be non-negative, got {}",
                self.weight_decay
            )));
        }
        if self.l2_reg < 0.0 || !self.l2_reg.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "reg must be non-negative, got {}",
                self.l2_reg
            )));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidConfig(String::from(
                "iterations must be at least 1",
            )));
        }
        if self.train_count == 0 || self.test_count == 0 {
            return Err(Error::InvalidConfig(String::from(
                "train and test sizes must be at least 1",
            )));
        }
        if let AnnealPolicy::Plateau { patience: 0 } = self.anneal {
            return Err(Error::InvalidConfig(String::from(
                "anneal patience must be at least 1",
            )));
        }
        Ok(())
    }
}

/// Mutable optimizer memory: one velocity tensor per parameter tensor plus
/// the current (possibly annealed) learning rate and plateau counters.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub velocity: Vec<LayerParams>,
    pub current_eta: f64,
    pub epochs_without_improvement: u32,
    pub best_error: f64,
}

impl OptimizerState {
    pub fn new(model: &ModelState, config: &TrainConfig) -> OptimizerState {
        OptimizerState {
            velocity: model.zero_grads(),
            current_eta: config.learning_rate,
            epochs_without_improvement: 0,
            best_error: f64::INFINITY,
        }
    }
}

/// One online update: for every parameter w with gradient g,
/// ĝ = g + (decay + reg)·w, v ← μ·v − η·ĝ, w ← w + v. Applied after every
/// training sample.
pub fn sgd_step(
    params: &mut [LayerParams],
    grads: &[LayerParams],
    state: &mut OptimizerState,
    config: &TrainConfig,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.velocity.len() {
        return Err(Error::ShapeMismatch {
            context: "optimizer step layer count",
            expected: format!("{} layers", params.len()),
            actual: format!(
                "{} gradient / {} velocity entries",
                grads.len(),
                state.velocity.len()
            ),
        });
    }
    let eta = state.current_eta;
    let mu = config.momentum;
    let lambda = config.weight_decay + config.l2_reg;
    for ((param, grad), vel) in params.iter_mut().zip(grads).zip(&mut state.velocity) {
        match (param, grad, vel) {
            (
                LayerParams::Conv { kernels: w0, bias: b0 },
                LayerParams::Conv { kernels: g0, bias: g1 },
                LayerParams::Conv { kernels: v0, bias: v1 },
            ) => {
                update_tensor(w0, g0, v0, eta, mu, lambda)?;
                update_tensor(b0, g1, v1, eta, mu, lambda)?;
            }
            (
                LayerParams::Subsample { gain: w0, bias: b0 },
                LayerParams::Subsample { gain: g0, bias: g1 },
                LayerParams::Subsample { gain: v0, bias: v1 },
            ) => {
                update_tensor(w0, g0, v0, eta, mu, lambda)?;
                update_tensor(b0, g1, v1, eta, mu, lambda)?;
            }
            (
                LayerParams::Full { weight: w0, bias: b0 },
                LayerParams::Full { weight: g0, bias: g1 },
                LayerParams::Full { weight: v0, bias: v1 },
            ) => {
                update_tensor(w0, g0, v0, eta, mu, lambda)?;
                update_tensor(b0, g1, v1, eta, mu, lambda)?;
            }
            (LayerParams::None, LayerParams::None, LayerParams::None) => {}
            _ => {
                return Err(Error::ShapeMismatch {
                    context: "optimizer step layer kinds",
                    expected: String::from("matching parameter/gradient/velocity variants"),
                    actual: String::from("mismatched variants"),
                })
            }
        }
    }
    Ok(())
}

fn update_tensor(
    w: &mut Tensor,
    g: &Tensor,
    v: &mut Tensor,
    eta: f64,
    mu: f64,
    lambda: f64,
) -> Result<()> {
    if w.shape() != g.shape() || w.shape() != v.shape() {
        return Err(Error::ShapeMismatch {
            context: "optimizer step tensor",
            expected: format!("{:?}", w.shape()),
            actual: format!("{:?} grad / {:?} velocity", g.shape(), v.shape()),
        });
    }
    for ((w, v), &g) in w.data_mut().iter_mut().zip(v.data_mut()).zip(g.data()) {
        let ghat = g + lambda * *w;
        *v = mu * *v - eta * ghat;
        *w += *v;
    }
    Ok(())
}

/// Recomputes the annealed learning rate from the full per-epoch test-error
/// history. The replay walks the history once: an error strictly below the
/// best so far resets the stall counter; once the counter reaches
/// `patience` the rate is divided by 10 and the counter resets. With the
/// policy off, the rate stays at the configured value.
pub fn plateau_anneal(state: &mut OptimizerState, error_history: &[f64], config: &TrainConfig) {
    let AnnealPolicy::Plateau { patience } = config.anneal else {
        return;
    };
    let mut eta = config.learning_rate;
    let mut best = f64::INFINITY;
    let mut stalled: u32 = 0;
    for &error in error_history {
        if error < best {
            best = error;
            stalled = 0;
        } else {
            stalled += 1;
            if stalled >= patience {
                eta /= 10.0;
                stalled = 0;
            }
        }
    }
    state.current_eta = eta;
    state.best_error = best;
    state.epochs_without_improvement = stalled;
}
