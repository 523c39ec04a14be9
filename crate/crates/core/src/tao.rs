//! The target oracle: a policy over per-victim target actions, trained with
//! PPO on the adversary reward using the mean of per-head probability ratios.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{AmiError, Result};
use crate::mappo::{
    compute_gae, ppo_policy_update, value_update, PolicySample, PpoSettings, PpoStats, RatioMode, ValueSample,
};
use crate::nn::{Action, ActionDistribution, ActionSpace, AdamConfig, AdamState, NetConfig, ParameterSet, PolicyNet, ValueNet};

pub const POLICY_PREFIX: &str = "tao/pi/";
pub const CRITIC_PREFIX: &str = "tao/v/";

/// Targets drawn for one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetDraw {
    pub targets: Vec<Action>,
    pub log_probs: Vec<f64>,
}

/// One step of oracle experience.
#[derive(Debug, Clone, PartialEq)]
pub struct TaoStep {
    pub input: Vec<f64>,
    pub draw: TargetDraw,
    pub reward: f64,
}

/// One episode of oracle experience.
#[derive(Debug, Clone, PartialEq)]
pub struct TaoEpisode {
    pub steps: Vec<TaoStep>,
    /// Critic input after the last step, used when the episode was truncated.
    pub bootstrap: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct TargetOracle {
    policy: PolicyNet,
    critic: ValueNet,
    policy_params: ParameterSet,
    critic_params: ParameterSet,
    policy_opt: AdamState,
    critic_opt: AdamState,
    state_dim: usize,
    n_victims: usize,
    space: ActionSpace,
}

impl TargetOracle {
    pub fn new(
        state_dim: usize,
        n_victims: usize,
        space: ActionSpace,
        net: &NetConfig,
        lr: f64,
        critic_lr: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let input = state_dim + (n_victims + 1) * space.encoded_dim();
        let mut policy_params = ParameterSet::new();
        let policy = PolicyNet::init(input, n_victims, space.clone(), net, POLICY_PREFIX, rng, &mut policy_params)?;
        let mut critic_params = ParameterSet::new();
        let critic = ValueNet::init(input, net, CRITIC_PREFIX, rng, &mut critic_params)?;
        Ok(Self {
            policy_opt: AdamState::new(&policy_params, AdamConfig::with_lr(lr)),
            critic_opt: AdamState::new(&critic_params, AdamConfig::with_lr(critic_lr)),
            policy,
            critic,
            policy_params,
            critic_params,
            state_dim,
            n_victims,
            space,
        })
    }

    pub fn n_victims(&self) -> usize {
        self.n_victims
    }

    /// Policy and critic blocks.
    pub fn parameters(&self) -> ParameterSet {
        let mut all = self.policy_params.clone();
        all.extend(self.critic_params.clone()).expect("disjoint prefixes");
        all
    }

    /// Encodes `(s_t, a^v_t, a^adv_t)`.
    pub fn input(&self, state: &[f64], victims: &[Action], adversary: &Action) -> Result<Vec<f64>> {
        if state.len() != self.state_dim || victims.len() != self.n_victims {
            return Err(AmiError::Dimension("target oracle input has the wrong shape".into()));
        }
        let mut x = state.to_vec();
        for a in victims {
            self.space.encode_into(a, &mut x);
        }
        self.space.encode_into(adversary, &mut x);
        Ok(x)
    }

    pub fn distributions(&self, input: &[f64]) -> Result<Vec<ActionDistribution>> {
        self.policy.distributions(&self.policy_params, input)
    }

    /// One target per victim, drawn independently per head (or the mode of
    /// each head when `deterministic`).
    pub fn sample_targets(&self, input: &[f64], rng: &mut ChaCha8Rng, deterministic: bool) -> Result<TargetDraw> {
        let dists = self.distributions(input)?;
        let (targets, log_probs) = dists
            .iter()
            .map(|d| {
                let a = if deterministic { d.mode() } else { d.sample(rng) };
                let lp = d.log_prob(&a);
                (a, lp)
            })
            .unzip();
        Ok(TargetDraw { targets, log_probs })
    }

    pub fn value(&self, input: &[f64]) -> Result<f64> {
        self.critic.value(&self.critic_params, input)
    }

    /// Advantages and returns of the adversary reward under the oracle critic.
    pub fn advantages(&self, episodes: &[TaoEpisode], gamma: f64, lambda: f64) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
        episodes
            .iter()
            .map(|ep| {
                let values: Vec<f64> = ep.steps.iter().map(|s| self.value(&s.input)).collect::<Result<_>>()?;
                let rewards: Vec<f64> = ep.steps.iter().map(|s| s.reward).collect();
                let mut dones = vec![false; ep.steps.len()];
                let last = match &ep.bootstrap {
                    Some(x) => self.value(x)?,
                    None => {
                        if let Some(d) = dones.last_mut() {
                            *d = true;
                        }
                        0.0
                    }
                };
                Ok(compute_gae(&rewards, &values, &dones, last, gamma, lambda))
            })
            .collect()
    }

    /// Critic regression onto returns of the adversary reward.
    #[allow(clippy::too_many_arguments)]
    pub fn update_critic(
        &mut self,
        episodes: &[TaoEpisode],
        returns: &[(Vec<f64>, Vec<f64>)],
        epochs: usize,
        minibatches: usize,
        huber: Option<f64>,
        max_grad_norm: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<f64> {
        let samples: Vec<ValueSample> = episodes
            .iter()
            .zip(returns)
            .flat_map(|(ep, (_, ret))| {
                ep.steps.iter().zip(ret).map(|(s, r)| ValueSample {
                    input: s.input.clone(),
                    target: *r,
                })
            })
            .collect();
        value_update(
            &self.critic,
            &mut self.critic_params,
            &mut self.critic_opt,
            &samples,
            epochs,
            minibatches,
            huber,
            max_grad_norm,
            rng,
        )
    }

    /// Clipped-surrogate update whose ratio is the mean of the per-victim
    /// head ratios.
    pub fn update_policy(
        &mut self,
        episodes: &[TaoEpisode],
        advantages: &[(Vec<f64>, Vec<f64>)],
        settings: &PpoSettings,
        rng: &mut ChaCha8Rng,
    ) -> Result<PpoStats> {
        let settings = PpoSettings {
            ratio_mode: RatioMode::MeanOfHeads,
            ..settings.clone()
        };
        let samples: Vec<PolicySample> = episodes
            .iter()
            .zip(advantages)
            .flat_map(|(ep, (adv, _))| {
                ep.steps.iter().zip(adv).map(|(s, a)| PolicySample {
                    input: s.input.clone(),
                    actions: s.draw.targets.clone(),
                    old_log_probs: s.draw.log_probs.clone(),
                    advantage: *a,
                })
            })
            .collect();
        ppo_policy_update(
            &self.policy,
            &mut self.policy_params,
            &mut self.policy_opt,
            &samples,
            &settings,
            rng,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mappo::policy_objective;
    use rand::SeedableRng;

    fn oracle(n_victims: usize, lr: f64) -> TargetOracle {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = NetConfig {
            hidden_dim: 16,
            ..NetConfig::default()
        };
        TargetOracle::new(2, n_victims, ActionSpace::Discrete { n: 3 }, &net, lr, lr, &mut rng).unwrap()
    }

    fn settings() -> PpoSettings {
        PpoSettings {
            clip: 0.2,
            epochs: 4,
            minibatches: 1,
            entropy_coef: 0.0,
            max_grad_norm: 10.0,
            ratio_mode: RatioMode::MeanOfHeads,
            normalize_advantages: true,
        }
    }

    #[test]
    fn deterministic_and_reproducible_draws() {
        let o = oracle(3, 1e-3);
        let x = o.input(&[0.1, 0.2], &[Action::Discrete(0), Action::Discrete(1), Action::Discrete(2)], &Action::Discrete(1)).unwrap();
        let dists = o.distributions(&x).unwrap();
        let det = o.sample_targets(&x, &mut ChaCha8Rng::seed_from_u64(0), true).unwrap();
        for (d, t) in dists.iter().zip(&det.targets) {
            assert_eq!(&d.mode(), t);
        }
        let a = o.sample_targets(&x, &mut ChaCha8Rng::seed_from_u64(5), false).unwrap();
        let b = o.sample_targets(&x, &mut ChaCha8Rng::seed_from_u64(5), false).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn head_frequencies_match_probabilities() {
        let o = oracle(2, 1e-3);
        let x = o.input(&[0.4, -0.3], &[Action::Discrete(2), Action::Discrete(0)], &Action::Discrete(1)).unwrap();
        let dists = o.distributions(&x).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 100_000;
        let mut counts = [[0usize; 3]; 2];
        for _ in 0..n {
            for (h, t) in o.sample_targets(&x, &mut rng, false).unwrap().targets.iter().enumerate() {
                counts[h][t.as_discrete().unwrap()] += 1;
            }
        }
        for h in 0..2 {
            for (k, p) in dists[h].probs().unwrap().iter().enumerate() {
                let sigma = (n as f64 * p * (1.0 - p)).sqrt();
                assert!((counts[h][k] as f64 - n as f64 * p).abs() < 3.0 * sigma + 1.0);
            }
        }
    }

    #[test]
    fn unchanged_parameters_give_plain_advantage_mean() {
        let o = oracle(3, 1e-3);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let steps: Vec<PolicySample> = (0..10)
            .map(|i| {
                let x = o.input(&[i as f64 * 0.1, 0.0], &vec![Action::Discrete(0); 3], &Action::Discrete(2)).unwrap();
                let d = o.sample_targets(&x, &mut rng, false).unwrap();
                PolicySample {
                    input: x,
                    actions: d.targets,
                    old_log_probs: d.log_probs,
                    advantage: i as f64 - 3.0,
                }
            })
            .collect();
        let obj = policy_objective(&o.policy, &o.policy_params, &steps, &settings()).unwrap();
        let mean = steps.iter().map(|s| s.advantage).sum::<f64>() / 10.0;
        assert!((obj - mean).abs() < 1e-12);
    }

    #[test]
    fn bandit_oracle_learns_rewarded_target() {
        // reward 1 whenever the first victim's target is action 2
        let mut o = oracle(2, 3e-3);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = o.input(&[0.5, 0.5], &vec![Action::Discrete(0); 2], &Action::Discrete(0)).unwrap();
        for _ in 0..60 {
            let eps: Vec<TaoEpisode> = (0..32)
                .map(|_| {
                    let draw = o.sample_targets(&x, &mut rng, false).unwrap();
                    let reward = if draw.targets[0] == Action::Discrete(2) { 1.0 } else { 0.0 };
                    TaoEpisode {
                        steps: vec![TaoStep {
                            input: x.clone(),
                            draw,
                            reward,
                        }],
                        bootstrap: None,
                    }
                })
                .collect();
            let adv = o.advantages(&eps, 0.99, 0.95).unwrap();
            o.update_critic(&eps, &adv, 4, 1, None, 10.0, &mut rng).unwrap();
            o.update_policy(&eps, &adv, &settings(), &mut rng).unwrap();
        }
        let p = o.distributions(&x).unwrap()[0].probs().unwrap()[2];
        assert!(p > 0.9, "p = {p}");
    }
}
