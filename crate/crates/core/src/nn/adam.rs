use serde::{Deserialize, Serialize};

use super::params::ParameterSet;
use crate::error::{AmiError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment accumulators laid out like the parameters they track.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    pub m: ParameterSet,
    pub v: ParameterSet,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &ParameterSet, config: AdamConfig) -> Self {
        Self {
            config,
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }
}

/// One bias-corrected Adam update. On a non-finite result neither the
/// parameters nor the state are modified.
pub fn adam_step(params: &mut ParameterSet, grads: &ParameterSet, state: &mut AdamState) -> Result<()> {
    params.ensure_layout(grads)?;
    params.ensure_layout(&state.m)?;
    let AdamConfig { lr, beta1, beta2, eps } = state.config;
    let step = state.step + 1;
    let bc1 = 1.0 - beta1.powi(step as i32);
    let bc2 = 1.0 - beta2.powi(step as i32);

    let mut new_m = state.m.clone();
    let mut new_v = state.v.clone();
    let mut new_p = params.clone();
    for bi in 0..grads.len() {
        let g = &grads.block(bi).values;
        let m = &mut new_m.block_mut(bi).values;
        let v = &mut new_v.block_mut(bi).values;
        let p = &mut new_p.block_mut(bi).values;
        for k in 0..g.len() {
            m[k] = beta1 * m[k] + (1.0 - beta1) * g[k];
            v[k] = beta2 * v[k] + (1.0 - beta2) * g[k] * g[k];
            p[k] -= lr * (m[k] / bc1) / ((v[k] / bc2).sqrt() + eps);
        }
    }
    if let Err(AmiError::NonFinite { block }) = new_p.check_finite() {
        return Err(AmiError::Divergence(format!(
            "adam step {step} produced non-finite values in `{block}` (grad norm {:.3e})",
            grads.global_norm()
        )));
    }
    *params = new_p;
    state.m = new_m;
    state.v = new_v;
    state.step = step;
    Ok(())
}

/// Rescales `grads` so their global L2 norm is at most `max_norm`; returns
/// the norm before clipping.
pub fn gradient_clip(grads: &mut ParameterSet, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > max_norm && norm > 0.0 {
        grads.scale(max_norm / norm);
    }
    norm
}
