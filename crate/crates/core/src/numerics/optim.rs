use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment accumulators for a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub step: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![T::zero(); len],
            v: vec![T::zero(); len],
            step: 0,
        }
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step<T: Real>(
    params: &mut [T],
    grads: &[T],
    state: &mut AdamState<T>,
    lr: f64,
    cfg: &AdamConfig,
) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() || state.v.len() != params.len()
    {
        return Err(Error::shape(
            "adam_step",
            &[params.len()],
            &[grads.len(), state.m.len(), state.v.len()],
        ));
    }
    state.step += 1;
    let t = state.step as i32;
    let b1 = T::c(cfg.beta1);
    let b2 = T::c(cfg.beta2);
    let one = T::one();
    let c1 = T::c(1.0 - cfg.beta1.powi(t));
    let c2 = T::c(1.0 - cfg.beta2.powi(t));
    let lr = T::c(lr);
    let eps = T::c(cfg.eps);
    for (((p, &g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        *m = b1 * *m + (one - b1) * g;
        *v = b2 * *v + (one - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

/// Cosine one-cycle learning-rate schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub max_lr: f64,
    pub total_steps: usize,
    pub warmup_fraction: f64,
    pub initial_divisor: f64,
    pub final_divisor: f64,
}

impl LrSchedule {
    pub fn new(max_lr: f64, total_steps: usize) -> Self {
        Self {
            max_lr,
            total_steps,
            warmup_fraction: 0.3,
            initial_divisor: 25.0,
            final_divisor: 1e4,
        }
    }

    pub fn initial_lr(&self) -> f64 {
        self.max_lr / self.initial_divisor
    }

    pub fn final_lr(&self) -> f64 {
        self.max_lr / (self.initial_divisor * self.final_divisor)
    }

    /// Step at which the rising phase ends (may be fractional).
    pub fn peak_step(&self) -> f64 {
        self.warmup_fraction * self.total_steps as f64
    }

    pub fn lr(&self, step: usize) -> Result<f64> {
        onecycle_lr(step, self)
    }
}

fn cosine_anneal(start: f64, end: f64, pct: f64) -> f64 {
    end + (start - end) / 2.0 * (1.0 + (std::f64::consts::PI * pct).cos())
}

pub fn onecycle_lr(step: usize, sched: &LrSchedule) -> Result<f64> {
    if step >= sched.total_steps {
        return Err(Error::invalid(format!(
            "schedule step {step} outside [0, {})",
            sched.total_steps
        )));
    }
    let s = step as f64;
    let peak = sched.peak_step();
    if s <= peak {
        let pct = if peak > 0.0 { s / peak } else { 1.0 };
        Ok(cosine_anneal(sched.initial_lr(), sched.max_lr, pct))
    } else {
        let span = (sched.total_steps - 1) as f64 - peak;
        let pct = if span > 0.0 {
            ((s - peak) / span).min(1.0)
        } else {
            1.0
        };
        Ok(cosine_anneal(sched.max_lr, sched.final_lr(), pct))
    }
}
