//! Next-action prediction for victims and the counterfactual expectation over
//! adversary actions.
//!
//! The model predicts every victim's next action from the current global
//! state and the current joint action. The adversary's action occupies its
//! own input segment so that it can be swapped for counterfactual values.

use log::warn;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{AmiError, Result};
use crate::mappo::Episode;
use crate::nn::{
    adam_step, gradient_clip, Action, ActionDistribution, ActionSpace, AdamConfig, AdamState,
    HeadGrad, NetConfig, ParameterSet, PolicyNet,
};

pub const PREFIX: &str = "opp/";

/// Log-std at or below this is treated as a point mass.
const POINT_MASS_LOG_STD: f64 = -30.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpponentConfig {
    pub lr: f64,
    pub epochs: usize,
    pub mini_batch_num: usize,
    pub max_grad_norm: f64,
    /// Samples per counterfactual expectation over a continuous adversary.
    pub counterfactual_samples: usize,
}

impl Default for OpponentConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            epochs: 4,
            mini_batch_num: 1,
            max_grad_norm: 10.0,
            counterfactual_samples: 8,
        }
    }
}

/// One supervised example: inputs at `t`, victim actions at `t + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub adversary_action: Action,
    pub victim_actions: Vec<Action>,
    pub next_victim_actions: Vec<Action>,
}

/// Extracts `(s_t, a_t, a^v_{t+1})` triples from episodes with an adversary.
pub fn transitions(episodes: &[Episode]) -> Result<Vec<Transition>> {
    let mut out = Vec::new();
    for ep in episodes {
        for w in ep.records.windows(2) {
            let slot = w[0]
                .adversary_slot
                .ok_or_else(|| AmiError::Integrity("episode has no adversary slot".into()))?;
            out.push(Transition {
                state: w[0].state.clone(),
                adversary_action: w[0].actions[slot].clone(),
                victim_actions: w[0].victim_actions().into_iter().cloned().collect(),
                next_victim_actions: w[1].victim_actions().into_iter().cloned().collect(),
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitStats {
    pub samples: usize,
    /// Mean per-victim negative log-likelihood before the update.
    pub nll_before: f64,
    /// Same, after the update.
    pub nll_after: f64,
}

/// Expected victim distributions under the adversary policy, plus the
/// expected entropy of each victim's conditional prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct Counterfactual {
    pub expected: Vec<ActionDistribution>,
    /// `E_{a~pi}[H(p(. | s, a, a^v))]` per victim, in nats.
    pub conditional_entropy: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct OpponentModel {
    net: PolicyNet,
    params: ParameterSet,
    opt: AdamState,
    cfg: OpponentConfig,
    state_dim: usize,
    n_victims: usize,
    space: ActionSpace,
}

impl OpponentModel {
    pub fn new(
        state_dim: usize,
        n_victims: usize,
        space: ActionSpace,
        net_cfg: &NetConfig,
        cfg: OpponentConfig,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let input = state_dim + (n_victims + 1) * space.encoded_dim();
        let mut params = ParameterSet::new();
        let net = PolicyNet::init(input, n_victims, space.clone(), net_cfg, PREFIX, rng, &mut params)?;
        let opt = AdamState::new(&params, AdamConfig::with_lr(cfg.lr));
        Ok(Self {
            net,
            params,
            opt,
            cfg,
            state_dim,
            n_victims,
            space,
        })
    }

    pub fn n_victims(&self) -> usize {
        self.n_victims
    }

    pub fn parameters(&self) -> &ParameterSet {
        &self.params
    }

    pub fn config(&self) -> &OpponentConfig {
        &self.cfg
    }

    fn encode(&self, state: &[f64], adversary: &Action, victims: &[Action]) -> Result<Vec<f64>> {
        if state.len() != self.state_dim || victims.len() != self.n_victims {
            return Err(AmiError::Dimension(format!(
                "opponent model expects state {} and {} victims, got {} and {}",
                self.state_dim,
                self.n_victims,
                state.len(),
                victims.len()
            )));
        }
        let mut x = state.to_vec();
        self.space.encode_into(adversary, &mut x);
        for a in victims {
            self.space.encode_into(a, &mut x);
        }
        Ok(x)
    }

    /// `p(a^v_{t+1,i} | s_t, a^adv_t, a^v_t)` for every victim `i`.
    pub fn predict(&self, state: &[f64], adversary: &Action, victims: &[Action]) -> Result<Vec<ActionDistribution>> {
        self.net.distributions(&self.params, &self.encode(state, adversary, victims)?)
    }

    /// Mean per-victim negative log-likelihood over `data`.
    pub fn nll(&self, data: &[Transition]) -> Result<f64> {
        if data.is_empty() {
            return Ok(0.0);
        }
        let mut total = 0.0;
        for tr in data {
            let d = self.predict(&tr.state, &tr.adversary_action, &tr.victim_actions)?;
            total -= d.iter().zip(&tr.next_victim_actions).map(|(d, a)| d.log_prob(a)).sum::<f64>();
        }
        Ok(total / (data.len() * self.n_victims) as f64)
    }

    /// Maximum-likelihood update on `data` (epochs of shuffled minibatches).
    pub fn fit(&mut self, data: &[Transition], rng: &mut ChaCha8Rng) -> Result<FitStats> {
        if data.is_empty() {
            warn!("opponent model fit called with an empty buffer");
            return Ok(FitStats {
                samples: 0,
                nll_before: 0.0,
                nll_after: 0.0,
            });
        }
        let nll_before = self.nll(data)?;
        let mut grads = self.params.zeros_like();
        let mut idx: Vec<usize> = (0..data.len()).collect();
        let k = self.cfg.mini_batch_num.clamp(1, data.len());
        let size = data.len().div_ceil(k);
        for _ in 0..self.cfg.epochs {
            idx.shuffle(rng);
            for batch in idx.chunks(size) {
                grads.fill_zero();
                let scale = 1.0 / batch.len() as f64;
                for &i in batch {
                    let tr = &data[i];
                    let x = self.encode(&tr.state, &tr.adversary_action, &tr.victim_actions)?;
                    let trace = self.net.trace(&self.params, &x)?;
                    // descend the negative log-likelihood
                    let hg: Vec<HeadGrad> = trace
                        .dists
                        .iter()
                        .zip(&tr.next_victim_actions)
                        .map(|(d, a)| {
                            let mut g = HeadGrad::zeros_for(d);
                            g.axpy(-1.0, &d.log_prob_grad(a));
                            g
                        })
                        .collect();
                    self.net.accumulate_grad(&self.params, &trace, &hg, scale, &mut grads)?;
                }
                if let Err(AmiError::NonFinite { block }) = grads.check_finite() {
                    return Err(AmiError::Divergence(format!("opponent model gradient non-finite in `{block}`")));
                }
                gradient_clip(&mut grads, self.cfg.max_grad_norm);
                adam_step(&mut self.params, &grads, &mut self.opt)?;
            }
        }
        Ok(FitStats {
            samples: data.len(),
            nll_before,
            nll_after: self.nll(data)?,
        })
    }

    /// `E_{a~adversary}[p(. | s, a, a^v)]` per victim. Discrete adversaries
    /// are enumerated exactly; continuous ones use Monte Carlo samples and a
    /// moment-matched Gaussian per victim.
    pub fn counterfactual(
        &self,
        state: &[f64],
        victims: &[Action],
        adversary: &ActionDistribution,
        rng: &mut ChaCha8Rng,
    ) -> Result<Counterfactual> {
        let (weights, actions): (Vec<f64>, Vec<Action>) = match adversary {
            ActionDistribution::Categorical { probs } => probs
                .iter()
                .enumerate()
                .filter(|(_, p)| **p > 0.0)
                .map(|(k, p)| (*p, Action::Discrete(k)))
                .unzip(),
            ActionDistribution::Gaussian { mean, log_std } => {
                if log_std.iter().all(|l| *l <= POINT_MASS_LOG_STD) {
                    (vec![1.0], vec![Action::Continuous(mean.clone())])
                } else {
                    let m = self.cfg.counterfactual_samples.max(1);
                    let w = 1.0 / m as f64;
                    (0..m).map(|_| (w, adversary.sample(rng))).unzip()
                }
            }
        };
        let per: Vec<Vec<ActionDistribution>> = actions
            .iter()
            .map(|a| self.predict(state, a, victims))
            .collect::<Result<_>>()?;
        let mut expected = Vec::with_capacity(self.n_victims);
        let mut conditional_entropy = Vec::with_capacity(self.n_victims);
        for i in 0..self.n_victims {
            let column: Vec<&ActionDistribution> = per.iter().map(|p| &p[i]).collect();
            expected.push(mix(&weights, &column)?);
            conditional_entropy.push(weights.iter().zip(&column).map(|(w, d)| w * d.entropy()).sum());
        }
        Ok(Counterfactual {
            expected,
            conditional_entropy,
        })
    }
}

/// Weighted mixture: exact for categoricals, moment-matched for Gaussians.
pub fn mix(weights: &[f64], dists: &[&ActionDistribution]) -> Result<ActionDistribution> {
    let total: f64 = weights.iter().sum();
    if dists.is_empty() || weights.len() != dists.len() || !(total > 0.0) {
        return Err(AmiError::Validation("mixture needs matching non-empty weights".into()));
    }
    match dists[0] {
        ActionDistribution::Categorical { probs } => {
            let mut out = vec![0.0; probs.len()];
            for (w, d) in weights.iter().zip(dists) {
                let p = d.probs().ok_or_else(|| AmiError::Validation("mixed distribution kinds".into()))?;
                out.iter_mut().zip(p).for_each(|(o, p)| *o += w / total * p);
            }
            let s: f64 = out.iter().sum();
            out.iter_mut().for_each(|o| *o /= s);
            Ok(ActionDistribution::Categorical { probs: out })
        }
        ActionDistribution::Gaussian { mean, .. } => {
            let dim = mean.len();
            let mut m1 = vec![0.0; dim];
            let mut m2 = vec![0.0; dim];
            for (w, d) in weights.iter().zip(dists) {
                let ActionDistribution::Gaussian { mean, log_std } = d else {
                    return Err(AmiError::Validation("mixed distribution kinds".into()));
                };
                for j in 0..dim {
                    let var = (2.0 * log_std[j]).exp();
                    m1[j] += w / total * mean[j];
                    m2[j] += w / total * (var + mean[j] * mean[j]);
                }
            }
            let log_std = m1
                .iter()
                .zip(&m2)
                .map(|(a, b)| 0.5 * (b - a * a).max(1e-300).ln())
                .collect();
            Ok(ActionDistribution::Gaussian { mean: m1, log_std })
        }
    }
}

/// A uniformly random adversary distribution over `space`.
pub fn uniform_over(space: &ActionSpace) -> ActionDistribution {
    match space {
        ActionSpace::Discrete { n } => ActionDistribution::Categorical {
            probs: vec![1.0 / *n as f64; *n],
        },
        ActionSpace::Continuous { dim, low, high } => ActionDistribution::Gaussian {
            mean: vec![(low + high) / 2.0; *dim],
            // variance of the uniform box
            log_std: vec![((high - low) / 12f64.sqrt()).ln(); *dim],
        },
    }
}

/// Draws a random categorical (for tests of linearity and mixtures).
pub fn random_categorical<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| -rng.random::<f64>().max(1e-12).ln()).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / s).collect()
}
