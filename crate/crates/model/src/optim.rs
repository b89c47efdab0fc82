//! AdamW with decoupled weight decay, warmup + cosine schedule, and global
//! norm clipping.

use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};
use crate::model::Gradients;
use crate::params::ParameterSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    pub peak_lr: f64,
    pub warmup_steps: u64,
    pub total_steps: u64,
    pub batch_size: usize,
    pub grad_clip_norm: f64,
    pub clip_gradients: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.99,
            epsilon: 1e-8,
            weight_decay: 3e-7,
            peak_lr: 5e-5,
            warmup_steps: 1000,
            total_steps: 10_000,
            batch_size: 8,
            grad_clip_norm: 1.0,
            clip_gradients: true,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ModelError::Config(m));
        if !(self.beta1 > 0.0 && self.beta1 < 1.0 && self.beta2 > 0.0 && self.beta2 < 1.0) {
            return bad(format!("betas must lie in (0, 1), got {} and {}", self.beta1, self.beta2));
        }
        if !(self.epsilon > 0.0) || !(self.weight_decay >= 0.0) || !(self.peak_lr >= 0.0) {
            return bad("epsilon must be positive, weight_decay and peak_lr nonnegative".into());
        }
        if self.total_steps == 0 || self.warmup_steps > self.total_steps {
            return bad(format!(
                "need 0 < total_steps and warmup_steps <= total_steps, got {} and {}",
                self.total_steps, self.warmup_steps
            ));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if self.clip_gradients && !(self.grad_clip_norm > 0.0) {
            return bad(format!("grad_clip_norm must be positive, got {}", self.grad_clip_norm));
        }
        Ok(())
    }

    /// Linear warmup from 0 to `peak_lr`, then cosine decay to 0 at
    /// `total_steps`. Steps past the end stay at 0.
    pub fn lr_at(&self, step: u64) -> f64 {
        let (w, n) = (self.warmup_steps, self.total_steps);
        if step >= n {
            return if w == n && step == n { self.peak_lr } else { 0.0 };
        }
        if step < w {
            return self.peak_lr * step as f64 / w as f64;
        }
        let frac = (step - w) as f64 / (n - w) as f64;
        self.peak_lr * 0.5 * (1.0 + (std::f64::consts::PI * frac).cos())
    }
}

/// First and second moments for the trainable tensors only.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    /// Number of updates applied so far.
    pub t: u64,
    pub m: Vec<Option<Vec<f64>>>,
    pub v: Vec<Option<Vec<f64>>>,
}

impl AdamState {
    pub fn new(p: &ParameterSet) -> Self {
        let zeros = |p: &ParameterSet| {
            p.params
                .iter()
                .map(|x| x.trainable.then(|| vec![0.0; x.tensor.len()]))
                .collect::<Vec<_>>()
        };
        Self {
            t: 0,
            m: zeros(p),
            v: zeros(p),
        }
    }

    /// Ids of tensors that carry optimizer state.
    pub fn tracked(&self) -> Vec<usize> {
        (0..self.m.len()).filter(|&i| self.m[i].is_some()).collect()
    }

    /// Whether this state was built for the trainable set of `p`.
    pub fn matches(&self, p: &ParameterSet) -> bool {
        self.m.len() == p.params.len()
            && self.v.len() == p.params.len()
            && p.params.iter().enumerate().all(|(i, x)| {
                let want = x.trainable.then_some(x.tensor.len());
                self.m[i].as_ref().map(Vec::len) == want && self.v[i].as_ref().map(Vec::len) == want
            })
    }
}

/// Rescales `grads` so their global norm is at most `max_norm`. Returns
/// the norm before clipping.
pub fn clip_global_norm(grads: &mut Gradients, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > max_norm {
        grads.scale(max_norm / norm);
    }
    norm
}

/// The AdamW recurrence on one tensor at update number `t` (1-based).
#[allow(clippy::too_many_arguments)]
pub fn adamw_update(param: &mut [f64], grad: &[f64], m: &mut [f64], v: &mut [f64], t: u64, opt: &OptimizerConfig, lr: f64) {
    let bc1 = 1.0 - opt.beta1.powi(t as i32);
    let bc2 = 1.0 - opt.beta2.powi(t as i32);
    for i in 0..param.len() {
        m[i] = opt.beta1 * m[i] + (1.0 - opt.beta1) * grad[i];
        v[i] = opt.beta2 * v[i] + (1.0 - opt.beta2) * grad[i] * grad[i];
        let mhat = m[i] / bc1;
        let vhat = v[i] / bc2;
        param[i] -= lr * (mhat / (vhat.sqrt() + opt.epsilon) + opt.weight_decay * param[i]);
    }
}

/// One bias-corrected AdamW update with decoupled weight decay:
/// `p -= lr · (m̂ / (√v̂ + ε) + wd · p)`.
pub fn adamw_step(
    p: &mut ParameterSet,
    grads: &Gradients,
    state: &mut AdamState,
    opt: &OptimizerConfig,
    lr: f64,
) -> Result<()> {
    if !state.matches(p) {
        return Err(ModelError::Config("optimizer state does not match the trainable set".into()));
    }
    grads.check_finite(p)?;
    state.t += 1;
    for id in 0..p.params.len() {
        let (Some(m), Some(v)) = (state.m[id].as_mut(), state.v[id].as_mut()) else {
            continue;
        };
        let g = grads
            .get(id)
            .ok_or_else(|| ModelError::Config(format!("missing gradient for {}", p.params[id].name)))?;
        let data = &mut p.params[id].tensor.data;
        adamw_update(data, g, m, v, state.t, opt, lr);
        if !data.iter().all(|x| x.is_finite()) {
            return Err(ModelError::NonFinite {
                tensor: p.params[id].name.clone(),
            });
        }
    }
    Ok(())
}
