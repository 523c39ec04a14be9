//! Action spaces, action distributions and the stochastic policy heads built
//! on top of [`Mlp`].

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::mlp::{Activation, Mlp, MlpSpec, MlpTrace};
use super::params::ParameterSet;
use crate::error::{AmiError, Result};

/// `0.5 * ln(2 * pi)`
pub const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ActionSpace {
    Discrete { n: usize },
    /// Box `[low, high]^dim`.
    Continuous { dim: usize, low: f64, high: f64 },
}

impl ActionSpace {
    /// Width of the flat encoding used as network input.
    pub fn encoded_dim(&self) -> usize {
        match self {
            ActionSpace::Discrete { n } => *n,
            ActionSpace::Continuous { dim, .. } => *dim,
        }
    }

    /// Network outputs per head (logits or means).
    pub fn head_width(&self) -> usize {
        self.encoded_dim()
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, ActionSpace::Discrete { .. })
    }

    pub fn contains(&self, action: &Action) -> bool {
        match (self, action) {
            (ActionSpace::Discrete { n }, Action::Discrete(a)) => a < n,
            (ActionSpace::Continuous { dim, low, high }, Action::Continuous(v)) => {
                v.len() == *dim && v.iter().all(|x| *x >= *low && *x <= *high)
            }
            _ => false,
        }
    }

    /// One-hot (discrete) or raw values (continuous) appended to `out`.
    pub fn encode_into(&self, action: &Action, out: &mut Vec<f64>) {
        match (self, action) {
            (ActionSpace::Discrete { n }, Action::Discrete(a)) => {
                out.extend((0..*n).map(|k| if k == *a { 1.0 } else { 0.0 }));
            }
            (ActionSpace::Continuous { .. }, Action::Continuous(v)) => out.extend_from_slice(v),
            _ => out.extend(std::iter::repeat_n(0.0, self.encoded_dim())),
        }
    }

    /// Log-volume of the action set: `ln |A|` or `ln((high-low)^dim)`.
    pub fn log_volume(&self) -> f64 {
        match self {
            ActionSpace::Discrete { n } => (*n as f64).ln(),
            ActionSpace::Continuous { dim, low, high } => *dim as f64 * (high - low).ln(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Action {
    Discrete(usize),
    Continuous(Vec<f64>),
}

impl Action {
    pub fn as_discrete(&self) -> Option<usize> {
        match self {
            Action::Discrete(a) => Some(*a),
            Action::Continuous(_) => None,
        }
    }

    pub fn as_continuous(&self) -> Option<&[f64]> {
        match self {
            Action::Continuous(v) => Some(v),
            Action::Discrete(_) => None,
        }
    }

    /// Flat numeric view (`[index]` for discrete actions).
    pub fn to_vec(&self) -> Vec<f64> {
        match self {
            Action::Discrete(a) => vec![*a as f64],
            Action::Continuous(v) => v.clone(),
        }
    }
}

/// Categorical probabilities or a diagonal Gaussian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ActionDistribution {
    Categorical { probs: Vec<f64> },
    Gaussian { mean: Vec<f64>, log_std: Vec<f64> },
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `-sum p ln p` with `0 ln 0 = 0`.
pub fn categorical_entropy(probs: &[f64]) -> f64 {
    -probs.iter().filter(|&&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>()
}

impl ActionDistribution {
    pub fn from_logits(logits: &[f64]) -> Self {
        ActionDistribution::Categorical { probs: softmax(logits) }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ActionDistribution::Categorical { probs } => {
                let sum: f64 = probs.iter().sum();
                if probs.is_empty() || probs.iter().any(|p| !(*p >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
                    return Err(AmiError::Validation(format!("invalid categorical (sum {sum})")));
                }
            }
            ActionDistribution::Gaussian { mean, log_std } => {
                if mean.len() != log_std.len() || log_std.iter().chain(mean).any(|v| !v.is_finite()) {
                    return Err(AmiError::Validation("invalid gaussian parameters".into()));
                }
            }
        }
        Ok(())
    }

    pub fn probs(&self) -> Option<&[f64]> {
        match self {
            ActionDistribution::Categorical { probs } => Some(probs),
            ActionDistribution::Gaussian { .. } => None,
        }
    }

    /// Log-probability (or log-density). Returns `-inf` when a categorical
    /// action has zero probability; callers treat that as a flagged sentinel.
    pub fn log_prob(&self, action: &Action) -> f64 {
        match (self, action) {
            (ActionDistribution::Categorical { probs }, Action::Discrete(a)) => match probs.get(*a) {
                Some(&p) if p > 0.0 => p.ln(),
                _ => f64::NEG_INFINITY,
            },
            (ActionDistribution::Gaussian { mean, log_std }, Action::Continuous(x)) => mean
                .iter()
                .zip(log_std)
                .zip(x)
                .map(|((m, ls), xi)| {
                    let z = (xi - m) / ls.exp();
                    -0.5 * z * z - ls - HALF_LN_2PI
                })
                .sum(),
            _ => f64::NEG_INFINITY,
        }
    }

    pub fn entropy(&self) -> f64 {
        match self {
            ActionDistribution::Categorical { probs } => categorical_entropy(probs),
            ActionDistribution::Gaussian { log_std, .. } => {
                log_std.iter().map(|ls| ls + 0.5 + HALF_LN_2PI).sum()
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Action {
        match self {
            ActionDistribution::Categorical { probs } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (k, p) in probs.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        return Action::Discrete(k);
                    }
                }
                // rounding: fall back to the last action with mass
                Action::Discrete(probs.iter().rposition(|p| *p > 0.0).unwrap_or(probs.len() - 1))
            }
            ActionDistribution::Gaussian { mean, log_std } => Action::Continuous(
                mean.iter()
                    .zip(log_std)
                    .map(|(m, ls)| m + ls.exp() * rng.sample::<f64, _>(StandardNormal))
                    .collect(),
            ),
        }
    }

    /// Argmax (first on ties) or the Gaussian mean.
    pub fn mode(&self) -> Action {
        match self {
            ActionDistribution::Categorical { probs } => {
                let mut best = 0;
                for (k, p) in probs.iter().enumerate() {
                    if *p > probs[best] {
                        best = k;
                    }
                }
                Action::Discrete(best)
            }
            ActionDistribution::Gaussian { mean, .. } => Action::Continuous(mean.clone()),
        }
    }

    /// Gradient of `log_prob(action)` with respect to the head outputs.
    pub fn log_prob_grad(&self, action: &Action) -> HeadGrad {
        match (self, action) {
            (ActionDistribution::Categorical { probs }, Action::Discrete(a)) => HeadGrad::Logits(
                probs
                    .iter()
                    .enumerate()
                    .map(|(k, p)| if k == *a { 1.0 - p } else { -p })
                    .collect(),
            ),
            (ActionDistribution::Gaussian { mean, log_std }, Action::Continuous(x)) => {
                let mut gm = Vec::with_capacity(mean.len());
                let mut gs = Vec::with_capacity(mean.len());
                for ((m, ls), xi) in mean.iter().zip(log_std).zip(x) {
                    let var = (2.0 * ls).exp();
                    let d = xi - m;
                    gm.push(d / var);
                    gs.push(d * d / var - 1.0);
                }
                HeadGrad::Gaussian { mean: gm, log_std: gs }
            }
            _ => HeadGrad::zeros_for(self),
        }
    }

    /// Gradient of the entropy with respect to the head outputs.
    pub fn entropy_grad(&self) -> HeadGrad {
        match self {
            ActionDistribution::Categorical { probs } => {
                let h = categorical_entropy(probs);
                HeadGrad::Logits(
                    probs
                        .iter()
                        .map(|&p| if p > 0.0 { -p * (p.ln() + h) } else { 0.0 })
                        .collect(),
                )
            }
            ActionDistribution::Gaussian { mean, log_std } => HeadGrad::Gaussian {
                mean: vec![0.0; mean.len()],
                log_std: vec![1.0; log_std.len()],
            },
        }
    }
}

/// `ln probs[a]` for discrete heads or the diagonal-Gaussian log density.
pub fn head_log_prob(dist: &ActionDistribution, action: &Action) -> f64 {
    dist.log_prob(action)
}

pub fn head_entropy(dist: &ActionDistribution) -> f64 {
    dist.entropy()
}

/// Loss gradient with respect to one head's outputs.
#[derive(Debug, Clone, PartialEq)]
pub enum HeadGrad {
    Logits(Vec<f64>),
    Gaussian { mean: Vec<f64>, log_std: Vec<f64> },
}

impl HeadGrad {
    pub fn zeros_for(dist: &ActionDistribution) -> Self {
        match dist {
            ActionDistribution::Categorical { probs } => HeadGrad::Logits(vec![0.0; probs.len()]),
            ActionDistribution::Gaussian { mean, .. } => HeadGrad::Gaussian {
                mean: vec![0.0; mean.len()],
                log_std: vec![0.0; mean.len()],
            },
        }
    }

    /// `self += k * other`
    pub fn axpy(&mut self, k: f64, other: &HeadGrad) {
        match (self, other) {
            (HeadGrad::Logits(a), HeadGrad::Logits(b)) => a.iter_mut().zip(b).for_each(|(x, y)| *x += k * y),
            (HeadGrad::Gaussian { mean: am, log_std: al }, HeadGrad::Gaussian { mean: bm, log_std: bl }) => {
                am.iter_mut().zip(bm).for_each(|(x, y)| *x += k * y);
                al.iter_mut().zip(bl).for_each(|(x, y)| *x += k * y);
            }
            _ => {}
        }
    }
}

/// Initialization and architecture settings shared by policy and value nets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub hidden_dim: usize,
    pub hidden_layers: usize,
    pub activation: Activation,
    /// Gain of policy output layers.
    pub output_gain: f64,
    /// Initial standard deviation of continuous heads.
    pub std_y_coef: f64,
    /// Scale applied to the learnable log-std parameter.
    pub std_x_coef: f64,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            hidden_dim: 64,
            hidden_layers: 1,
            activation: Activation::Relu,
            output_gain: 0.01,
            std_y_coef: 0.5,
            std_x_coef: 1.0,
        }
    }
}

impl NetConfig {
    pub fn mlp_spec(&self, input_dim: usize, output_dim: usize) -> MlpSpec {
        MlpSpec::new(
            input_dim,
            vec![self.hidden_dim; self.hidden_layers.max(1)],
            output_dim,
            self.activation,
        )
    }
}

/// A shared trunk with `heads` independent action heads over the same space.
///
/// The last linear layer emits `heads * head_width` values; continuous heads
/// additionally own a state-independent log-std block.
#[derive(Debug, Clone)]
pub struct PolicyNet {
    mlp: Mlp,
    heads: usize,
    space: ActionSpace,
    log_std_idx: Option<usize>,
    std_x_coef: f64,
}

/// Forward-pass record for [`PolicyNet::accumulate_grad`].
#[derive(Debug, Clone)]
pub struct PolicyTrace {
    pub dists: Vec<ActionDistribution>,
    mlp: MlpTrace,
}

impl PolicyNet {
    pub fn init<R: Rng + ?Sized>(
        input_dim: usize,
        heads: usize,
        space: ActionSpace,
        cfg: &NetConfig,
        prefix: &str,
        rng: &mut R,
        params: &mut ParameterSet,
    ) -> Result<Self> {
        if heads == 0 {
            return Err(AmiError::Config("policy needs at least one head".into()));
        }
        let spec = cfg.mlp_spec(input_dim, heads * space.head_width());
        let mlp = Mlp::init(spec, prefix, 1.0, cfg.output_gain, rng, params)?;
        let log_std_idx = match &space {
            ActionSpace::Continuous { dim, .. } => {
                let init = cfg.std_y_coef.ln() / cfg.std_x_coef;
                Some(params.push(format!("{prefix}log_std"), vec![heads * dim], vec![init; heads * dim])?)
            }
            ActionSpace::Discrete { .. } => None,
        };
        Ok(Self {
            mlp,
            heads,
            space,
            log_std_idx,
            std_x_coef: cfg.std_x_coef,
        })
    }

    pub fn bind(
        input_dim: usize,
        heads: usize,
        space: ActionSpace,
        cfg: &NetConfig,
        prefix: &str,
        params: &ParameterSet,
    ) -> Result<Self> {
        let spec = cfg.mlp_spec(input_dim, heads * space.head_width());
        let mlp = Mlp::bind(spec, prefix, params)?;
        let log_std_idx = match &space {
            ActionSpace::Continuous { .. } => Some(
                params
                    .index_of(&format!("{prefix}log_std"))
                    .ok_or_else(|| AmiError::Config(format!("missing `{prefix}log_std`")))?,
            ),
            ActionSpace::Discrete { .. } => None,
        };
        Ok(Self {
            mlp,
            heads,
            space,
            log_std_idx,
            std_x_coef: cfg.std_x_coef,
        })
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    pub fn space(&self) -> &ActionSpace {
        &self.space
    }

    pub fn input_dim(&self) -> usize {
        self.mlp.spec().input_dim
    }

    fn split(&self, params: &ParameterSet, out: &[f64]) -> Vec<ActionDistribution> {
        let w = self.space.head_width();
        (0..self.heads)
            .map(|h| {
                let chunk = &out[h * w..(h + 1) * w];
                match self.log_std_idx {
                    None => ActionDistribution::from_logits(chunk),
                    Some(idx) => {
                        let ls = &params.block(idx).values[h * w..(h + 1) * w];
                        ActionDistribution::Gaussian {
                            mean: chunk.to_vec(),
                            log_std: ls.iter().map(|v| v * self.std_x_coef).collect(),
                        }
                    }
                }
            })
            .collect()
    }

    pub fn distributions(&self, params: &ParameterSet, input: &[f64]) -> Result<Vec<ActionDistribution>> {
        let out = self.mlp.forward(params, input)?;
        Ok(self.split(params, &out))
    }

    pub fn trace(&self, params: &ParameterSet, input: &[f64]) -> Result<PolicyTrace> {
        let mlp = self.mlp.forward_trace(params, input)?;
        let dists = self.split(params, mlp.output());
        Ok(PolicyTrace { dists, mlp })
    }

    /// Accumulates `scale * sum_h <head_grads[h], d head_h / d params>`.
    pub fn accumulate_grad(
        &self,
        params: &ParameterSet,
        trace: &PolicyTrace,
        head_grads: &[HeadGrad],
        scale: f64,
        grads: &mut ParameterSet,
    ) -> Result<()> {
        if head_grads.len() != self.heads {
            return Err(AmiError::Dimension(format!(
                "{} head grads for {} heads",
                head_grads.len(),
                self.heads
            )));
        }
        let w = self.space.head_width();
        let mut out_grad = vec![0.0; self.heads * w];
        for (h, g) in head_grads.iter().enumerate() {
            match g {
                HeadGrad::Logits(v) => out_grad[h * w..(h + 1) * w].copy_from_slice(v),
                HeadGrad::Gaussian { mean, log_std } => {
                    out_grad[h * w..(h + 1) * w].copy_from_slice(mean);
                    if let Some(idx) = self.log_std_idx {
                        let gl = &mut grads.block_mut(idx).values[h * w..(h + 1) * w];
                        for (acc, v) in gl.iter_mut().zip(log_std) {
                            *acc += scale * v * self.std_x_coef;
                        }
                    }
                }
            }
        }
        self.mlp.backward_into(params, &trace.mlp, &out_grad, scale, grads)
    }
}

/// Scalar state-value network.
#[derive(Debug, Clone)]
pub struct ValueNet {
    mlp: Mlp,
}

impl ValueNet {
    pub fn init<R: Rng + ?Sized>(
        input_dim: usize,
        cfg: &NetConfig,
        prefix: &str,
        rng: &mut R,
        params: &mut ParameterSet,
    ) -> Result<Self> {
        let mlp = Mlp::init(cfg.mlp_spec(input_dim, 1), prefix, 1.0, 1.0, rng, params)?;
        Ok(Self { mlp })
    }

    pub fn bind(input_dim: usize, cfg: &NetConfig, prefix: &str, params: &ParameterSet) -> Result<Self> {
        Ok(Self {
            mlp: Mlp::bind(cfg.mlp_spec(input_dim, 1), prefix, params)?,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.mlp.spec().input_dim
    }

    pub fn value(&self, params: &ParameterSet, input: &[f64]) -> Result<f64> {
        Ok(self.mlp.forward(params, input)?[0])
    }

    pub fn trace(&self, params: &ParameterSet, input: &[f64]) -> Result<MlpTrace> {
        self.mlp.forward_trace(params, input)
    }

    /// Accumulates `scale * dloss_dv * dV/dparams`.
    pub fn accumulate_grad(
        &self,
        params: &ParameterSet,
        trace: &MlpTrace,
        dloss_dv: f64,
        scale: f64,
        grads: &mut ParameterSet,
    ) -> Result<()> {
        self.mlp.backward_into(params, trace, &[dloss_dv], scale, grads)
    }
}

/// Gaussian density of a scalar.
pub fn normal_density(x: f64, mean: f64, std: f64) -> f64 {
    let z = (x - mean) / std;
    (-0.5 * z * z).exp() / (std * (2.0 * PI).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn categorical_log_prob_and_entropy() {
        let d = ActionDistribution::Categorical { probs: vec![0.2, 0.8] };
        assert!((head_log_prob(&d, &Action::Discrete(1)) - (-0.223_143_551_314_209_7)).abs() < 1e-12);
        let u = ActionDistribution::Categorical { probs: vec![0.5, 0.5] };
        assert!((head_entropy(&u) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn zero_probability_action_is_neg_infinity() {
        let d = ActionDistribution::Categorical { probs: vec![0.0, 1.0] };
        assert_eq!(d.log_prob(&Action::Discrete(0)), f64::NEG_INFINITY);
    }

    #[test]
    fn standard_normal_log_density_at_zero() {
        let d = ActionDistribution::Gaussian {
            mean: vec![0.0],
            log_std: vec![0.0],
        };
        assert!((d.log_prob(&Action::Continuous(vec![0.0])) + 0.918_938_533_204_672_7).abs() < 1e-12);
        // analytic entropy 0.5 ln(2 pi e)
        let want = 0.5 * (2.0 * PI * std::f64::consts::E).ln();
        assert!((d.entropy() - want).abs() < 1e-12);
    }

    #[test]
    fn softmax_sums_to_one_and_entropy_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for n in 2..10 {
            let logits: Vec<f64> = (0..n).map(|_| rng.random_range(-20.0..20.0)).collect();
            let p = softmax(&logits);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let h = categorical_entropy(&p);
            assert!(h >= 0.0 && h <= (n as f64).ln() + 1e-12);
        }
    }

    fn fd_check(dist_of: impl Fn(&[f64]) -> ActionDistribution, f: impl Fn(&ActionDistribution) -> f64, x: &[f64]) -> Vec<f64> {
        let h = 1e-6;
        (0..x.len())
            .map(|i| {
                let mut xp = x.to_vec();
                let mut xm = x.to_vec();
                xp[i] += h;
                xm[i] -= h;
                (f(&dist_of(&xp)) - f(&dist_of(&xm))) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn categorical_grads_match_finite_differences() {
        let logits = [0.3, -1.0, 0.7, 0.1];
        let d = ActionDistribution::from_logits(&logits);
        let a = Action::Discrete(2);
        let HeadGrad::Logits(g) = d.log_prob_grad(&a) else { panic!() };
        let fd = fd_check(ActionDistribution::from_logits, |d| d.log_prob(&a), &logits);
        for (x, y) in g.iter().zip(&fd) {
            assert!((x - y).abs() < 1e-7);
        }
        let HeadGrad::Logits(g) = d.entropy_grad() else { panic!() };
        let fd = fd_check(ActionDistribution::from_logits, |d| d.entropy(), &logits);
        for (x, y) in g.iter().zip(&fd) {
            assert!((x - y).abs() < 1e-7);
        }
    }

    #[test]
    fn gaussian_grads_match_finite_differences() {
        let x = [0.4, -0.3, 0.1, -0.5];
        let mk = |v: &[f64]| ActionDistribution::Gaussian {
            mean: v[..2].to_vec(),
            log_std: v[2..].to_vec(),
        };
        let a = Action::Continuous(vec![1.0, -0.2]);
        let HeadGrad::Gaussian { mean, log_std } = mk(&x).log_prob_grad(&a) else { panic!() };
        let fd = fd_check(mk, |d| d.log_prob(&a), &x);
        let g: Vec<f64> = mean.into_iter().chain(log_std).collect();
        for (x, y) in g.iter().zip(&fd) {
            assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn policy_net_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = NetConfig {
            hidden_dim: 5,
            output_gain: 1.0,
            ..NetConfig::default()
        };
        for space in [
            ActionSpace::Discrete { n: 3 },
            ActionSpace::Continuous { dim: 2, low: -1.0, high: 1.0 },
        ] {
            let mut params = ParameterSet::new();
            let net = PolicyNet::init(4, 2, space.clone(), &cfg, "p/", &mut rng, &mut params).unwrap();
            let input = [0.3, -0.7, 1.1, 0.2];
            let actions: Vec<Action> = net
                .distributions(&params, &input)
                .unwrap()
                .iter()
                .map(|d| d.sample(&mut rng))
                .collect();
            let objective = |p: &ParameterSet| -> f64 {
                net.distributions(p, &input)
                    .unwrap()
                    .iter()
                    .zip(&actions)
                    .map(|(d, a)| d.log_prob(a) + 0.3 * d.entropy())
                    .sum()
            };
            let trace = net.trace(&params, &input).unwrap();
            let hg: Vec<HeadGrad> = trace
                .dists
                .iter()
                .zip(&actions)
                .map(|(d, a)| {
                    let mut g = d.log_prob_grad(a);
                    g.axpy(0.3, &d.entropy_grad());
                    g
                })
                .collect();
            let mut grads = params.zeros_like();
            net.accumulate_grad(&params, &trace, &hg, 1.0, &mut grads).unwrap();
            for bi in 0..params.len() {
                for vi in 0..params.block(bi).values.len() {
                    let mut pp = params.clone();
                    let mut pm = params.clone();
                    pp.block_mut(bi).values[vi] += 1e-6;
                    pm.block_mut(bi).values[vi] -= 1e-6;
                    let fd = (objective(&pp) - objective(&pm)) / 2e-6;
                    let an = grads.block(bi).values[vi];
                    assert!((fd - an).abs() <= 1e-4 * fd.abs().max(an.abs()).max(1e-3), "{fd} vs {an}");
                }
            }
        }
    }

    #[test]
    fn sampling_is_reproducible() {
        let d = ActionDistribution::Categorical {
            probs: vec![0.1, 0.2, 0.7],
        };
        let mut a = ChaCha8Rng::seed_from_u64(9);
        let mut b = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            assert_eq!(d.sample(&mut a), d.sample(&mut b));
        }
        assert_eq!(d.mode(), Action::Discrete(2));
    }
}
