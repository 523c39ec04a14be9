//! Clipped-surrogate policy optimization and critic regression, shared by
//! the victim trainer, the adversary and the oracle.

use log::warn;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{AmiError, Result};
use crate::nn::{adam_step, gradient_clip, Action, AdamState, HeadGrad, ParameterSet, PolicyNet, ValueNet};

/// How per-head probability ratios combine into one ratio per sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RatioMode {
    /// Ratio of joint probabilities (product over heads).
    Joint,
    /// Arithmetic mean of the per-head ratios.
    MeanOfHeads,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PpoSettings {
    pub clip: f64,
    pub epochs: usize,
    pub minibatches: usize,
    pub entropy_coef: f64,
    pub max_grad_norm: f64,
    pub ratio_mode: RatioMode,
    pub normalize_advantages: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicySample {
    pub input: Vec<f64>,
    /// One action per head.
    pub actions: Vec<Action>,
    pub old_log_probs: Vec<f64>,
    pub advantage: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueSample {
    pub input: Vec<f64>,
    pub target: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PpoStats {
    pub policy_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub skipped: usize,
    pub grad_norm: f64,
}

/// `min(rho A, clip(rho, 1-eps, 1+eps) A)` and its derivative in `rho`.
pub fn clipped_surrogate(ratio: f64, advantage: f64, eps: f64) -> (f64, f64) {
    let unclipped = ratio * advantage;
    let clipped = ratio.clamp(1.0 - eps, 1.0 + eps) * advantage;
    if unclipped <= clipped {
        (unclipped, advantage)
    } else if ratio > 1.0 - eps && ratio < 1.0 + eps {
        (clipped, advantage)
    } else {
        (clipped, 0.0)
    }
}

/// Shifts and scales to zero mean and unit (population) std.
pub fn normalize_advantages(values: &mut [f64]) {
    let n = values.len();
    if n < 2 {
        return;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    let std = var.sqrt();
    if std < 1e-12 {
        values.iter_mut().for_each(|v| *v -= mean);
        return;
    }
    values.iter_mut().for_each(|v| *v = (*v - mean) / std);
}

/// Combined ratio and `d rho / d logp_h` for every head.
fn ratio_and_grad(mode: RatioMode, new_lp: &[f64], old_lp: &[f64]) -> (f64, Vec<f64>) {
    match mode {
        RatioMode::Joint => {
            let diff: f64 = new_lp.iter().zip(old_lp).map(|(a, b)| a - b).sum();
            let r = diff.exp();
            (r, vec![r; new_lp.len()])
        }
        RatioMode::MeanOfHeads => {
            let k = new_lp.len() as f64;
            let per: Vec<f64> = new_lp.iter().zip(old_lp).map(|(a, b)| (a - b).exp()).collect();
            let r = per.iter().sum::<f64>() / k;
            (r, per.into_iter().map(|p| p / k).collect())
        }
    }
}

/// Mean clipped-surrogate objective plus entropy bonus over `samples`
/// (advantages taken as given).
pub fn policy_objective(
    net: &PolicyNet,
    params: &ParameterSet,
    samples: &[PolicySample],
    settings: &PpoSettings,
) -> Result<f64> {
    let mut total = 0.0;
    for s in samples {
        let dists = net.distributions(params, &s.input)?;
        let lp: Vec<f64> = dists.iter().zip(&s.actions).map(|(d, a)| d.log_prob(a)).collect();
        let (ratio, _) = ratio_and_grad(settings.ratio_mode, &lp, &s.old_log_probs);
        let ent = dists.iter().map(|d| d.entropy()).sum::<f64>() / dists.len() as f64;
        total += clipped_surrogate(ratio, s.advantage, settings.clip).0 + settings.entropy_coef * ent;
    }
    Ok(total / samples.len().max(1) as f64)
}

fn minibatch_indices<R: Rng + ?Sized>(n: usize, minibatches: usize, rng: &mut R) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let k = minibatches.clamp(1, n.max(1));
    let size = n.div_ceil(k);
    idx.chunks(size.max(1)).map(|c| c.to_vec()).collect()
}

/// Gradient of the (negated) minibatch objective; returns stats contributions.
#[allow(clippy::too_many_arguments)]
fn policy_minibatch_grad(
    net: &PolicyNet,
    params: &ParameterSet,
    samples: &[PolicySample],
    batch: &[usize],
    advantages: &[f64],
    settings: &PpoSettings,
    grads: &mut ParameterSet,
    stats: &mut PpoStats,
) -> Result<usize> {
    let mut used = 0;
    let scale = 1.0 / batch.len() as f64;
    for (&i, &adv) in batch.iter().zip(advantages) {
        let s = &samples[i];
        let trace = net.trace(params, &s.input)?;
        let lp: Vec<f64> = trace.dists.iter().zip(&s.actions).map(|(d, a)| d.log_prob(a)).collect();
        let (ratio, dratio) = ratio_and_grad(settings.ratio_mode, &lp, &s.old_log_probs);
        if !ratio.is_finite() {
            stats.skipped += 1;
            continue;
        }
        let (obj, dobj) = clipped_surrogate(ratio, adv, settings.clip);
        let heads = trace.dists.len() as f64;
        let ent = trace.dists.iter().map(|d| d.entropy()).sum::<f64>() / heads;
        stats.policy_loss -= obj;
        stats.entropy += ent;
        stats.approx_kl += s.old_log_probs.iter().zip(&lp).map(|(o, n)| o - n).sum::<f64>();
        if (ratio - 1.0).abs() > settings.clip {
            stats.clip_fraction += 1.0;
        }
        // ascend objective: descend -(obj + c * ent)
        let head_grads: Vec<HeadGrad> = trace
            .dists
            .iter()
            .zip(&s.actions)
            .zip(&dratio)
            .map(|((d, a), dr)| {
                let mut g = d.log_prob_grad(a);
                let lp_coef = -dobj * dr;
                match &mut g {
                    HeadGrad::Logits(v) => v.iter_mut().for_each(|x| *x *= lp_coef),
                    HeadGrad::Gaussian { mean, log_std } => {
                        mean.iter_mut().for_each(|x| *x *= lp_coef);
                        log_std.iter_mut().for_each(|x| *x *= lp_coef);
                    }
                }
                g.axpy(-settings.entropy_coef / heads, &d.entropy_grad());
                g
            })
            .collect();
        net.accumulate_grad(params, &trace, &head_grads, scale, grads)?;
        used += 1;
    }
    Ok(used)
}

/// Runs `epochs` passes of shuffled minibatch updates on the clipped
/// surrogate. Samples with a non-finite ratio are skipped and counted.
pub fn ppo_policy_update<R: Rng + ?Sized>(
    net: &PolicyNet,
    params: &mut ParameterSet,
    opt: &mut AdamState,
    samples: &[PolicySample],
    settings: &PpoSettings,
    rng: &mut R,
) -> Result<PpoStats> {
    let mut stats = PpoStats::default();
    if samples.is_empty() {
        return Ok(stats);
    }
    let mut grads = params.zeros_like();
    let mut seen = 0usize;
    for _ in 0..settings.epochs {
        for batch in minibatch_indices(samples.len(), settings.minibatches, rng) {
            let mut adv: Vec<f64> = batch.iter().map(|&i| samples[i].advantage).collect();
            if settings.normalize_advantages {
                normalize_advantages(&mut adv);
            }
            grads.fill_zero();
            seen += policy_minibatch_grad(net, params, samples, &batch, &adv, settings, &mut grads, &mut stats)?;
            if let Err(AmiError::NonFinite { block }) = grads.check_finite() {
                return Err(AmiError::Divergence(format!("policy gradient non-finite in `{block}`")));
            }
            stats.grad_norm = gradient_clip(&mut grads, settings.max_grad_norm);
            adam_step(params, &grads, opt)?;
        }
    }
    if stats.skipped > 0 {
        warn!("skipped {} samples with non-finite probability ratios", stats.skipped);
    }
    let denom = seen.max(1) as f64;
    stats.policy_loss /= denom;
    stats.entropy /= denom;
    stats.approx_kl /= denom;
    stats.clip_fraction /= denom;
    Ok(stats)
}

/// Critic loss: Huber with threshold `delta` or half squared error.
pub fn value_loss(error: f64, huber_delta: Option<f64>) -> (f64, f64) {
    match huber_delta {
        Some(d) if error.abs() > d => (d * (error.abs() - 0.5 * d), d * error.signum()),
        _ => (0.5 * error * error, error),
    }
}

/// Regresses the critic onto `samples` targets; returns the mean loss of the
/// last epoch.
#[allow(clippy::too_many_arguments)]
pub fn value_update<R: Rng + ?Sized>(
    net: &ValueNet,
    params: &mut ParameterSet,
    opt: &mut AdamState,
    samples: &[ValueSample],
    epochs: usize,
    minibatches: usize,
    huber_delta: Option<f64>,
    max_grad_norm: f64,
    rng: &mut R,
) -> Result<f64> {
    if samples.is_empty() {
        return Ok(0.0);
    }
    let mut grads = params.zeros_like();
    let mut last = 0.0;
    for _ in 0..epochs {
        let mut total = 0.0;
        for batch in minibatch_indices(samples.len(), minibatches, rng) {
            grads.fill_zero();
            let scale = 1.0 / batch.len() as f64;
            for &i in &batch {
                let s = &samples[i];
                let trace = net.trace(params, &s.input)?;
                let (loss, dl) = value_loss(trace.output()[0] - s.target, huber_delta);
                total += loss;
                net.accumulate_grad(params, &trace, dl, scale, &mut grads)?;
            }
            if let Err(AmiError::NonFinite { block }) = grads.check_finite() {
                return Err(AmiError::Divergence(format!("value gradient non-finite in `{block}`")));
            }
            gradient_clip(&mut grads, max_grad_norm);
            adam_step(params, &grads, opt)?;
        }
        last = total / samples.len() as f64;
    }
    Ok(last)
}
