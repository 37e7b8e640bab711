use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::model::ParamStore;

/// Bias-corrected Adam moments.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(params: &ParamStore) -> Self {
        let zeros: Vec<Tensor> = params.tensors().map(|t| Tensor::zeros(t.shape())).collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One Adam update. The whole step is rejected, leaving parameters and
/// state untouched, if any gradient is not finite.
pub fn adam_step(params: &mut ParamStore, grads: &[Tensor], state: &mut AdamState, lr: f64) -> Result<()> {
    if grads.len() != params.len() {
        return Err(Error::shape("adam_step", &[params.len()], &[grads.len()]));
    }
    for ((name, p), g) in params.iter().zip(grads) {
        if p.shape() != g.shape() {
            return Err(Error::shape("adam_step", p.shape(), g.shape()));
        }
        if !g.is_finite() {
            return Err(Error::NonFiniteGradient(name.to_string()));
        }
    }
    state.t += 1;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);
    let c1 = 1.0 - b1.powi(state.t as i32);
    let c2 = 1.0 - b2.powi(state.t as i32);
    for (((p, g), m), v) in params
        .tensors_mut()
        .zip(grads)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        for (((p, &g), m), v) in p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut())
            .zip(v.data_mut())
        {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// `base_lr · decay_ratio^(t / decay_every)`, with the exponent floored when `staircase`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub base_lr: f64,
    pub decay_ratio: f64,
    pub decay_every: u64,
    pub staircase: bool,
}

impl Default for LrSchedule {
    fn default() -> Self {
        LrSchedule {
            base_lr: 1e-3,
            decay_ratio: 0.96,
            decay_every: 100_000,
            staircase: true,
        }
    }
}

impl LrSchedule {
    pub fn lr_at(&self, t: u64) -> f64 {
        let exponent = if self.staircase {
            (t / self.decay_every) as f64
        } else {
            t as f64 / self.decay_every as f64
        };
        self.base_lr * self.decay_ratio.powf(exponent)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.base_lr >= 0.0 && self.base_lr.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be non-negative, got {}",
                self.base_lr
            )));
        }
        if !(self.decay_ratio > 0.0 && self.decay_ratio <= 1.0) {
            return Err(Error::Config(format!(
                "decay ratio must lie in (0, 1], got {}",
                self.decay_ratio
            )));
        }
        if self.decay_every == 0 {
            return Err(Error::Config("decay_every must be at least 1".into()));
        }
        Ok(())
    }
}

/// Exponential moving average of the weights.
#[derive(Clone, Debug, PartialEq)]
pub struct EmaState {
    pub shadow: ParamStore,
    pub decay: f64,
}

impl EmaState {
    pub fn new(params: &ParamStore, decay: f64) -> Self {
        EmaState {
            shadow: params.clone(),
            decay,
        }
    }

    /// `shadow ← decay·shadow + (1 − decay)·params`.
    ///
    /// Written as `shadow + (1 − decay)(params − shadow)` so a shadow that
    /// already equals the weights stays bit-identical.
    pub fn update(&mut self, params: &ParamStore) {
        let w = 1.0 - self.decay;
        for (s, p) in self.shadow.tensors_mut().zip(params.tensors()) {
            if self.decay == 0.0 {
                s.data_mut().copy_from_slice(p.data());
                continue;
            }
            for (s, &p) in s.data_mut().iter_mut().zip(p.data()) {
                *s += w * (p - *s);
            }
        }
    }
}
