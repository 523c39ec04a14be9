use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::mappo::{
    compute_gae, ppo_policy_update, value_update, Episode, PolicySample, PpoSettings, PpoStats, RatioMode, SlotPolicy,
    TrainConfig, ValueSample,
};
use crate::nn::{Action, ActionDistribution, ActionSpace, AdamConfig, AdamState, NetConfig, ParameterSet, PolicyNet, ValueNet};

pub const ACTOR_PREFIX: &str = "adv/pi/";
pub const CRITIC_PREFIX: &str = "adv/v/";

/// The attacker: an actor over its own observation and a critic over the
/// global state. It never holds a reference to the victims.
#[derive(Debug, Clone)]
pub struct AdversaryAgent {
    actor: PolicyNet,
    critic: ValueNet,
    actor_params: ParameterSet,
    critic_params: ParameterSet,
    actor_opt: AdamState,
    critic_opt: AdamState,
}

impl AdversaryAgent {
    pub fn new(obs_dim: usize, state_dim: usize, space: ActionSpace, cfg: &TrainConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        let net = cfg.net_config();
        let mut actor_params = ParameterSet::new();
        let actor = PolicyNet::init(obs_dim, 1, space, &net, ACTOR_PREFIX, rng, &mut actor_params)?;
        let mut critic_params = ParameterSet::new();
        let critic = ValueNet::init(state_dim, &net, CRITIC_PREFIX, rng, &mut critic_params)?;
        Ok(Self {
            actor_opt: AdamState::new(&actor_params, AdamConfig::with_lr(cfg.actor_lr())),
            critic_opt: AdamState::new(&critic_params, AdamConfig::with_lr(cfg.critic_lr())),
            actor,
            critic,
            actor_params,
            critic_params,
        })
    }

    /// Rebinds a saved adversary (optimizer state starts fresh).
    pub fn from_parameters(
        obs_dim: usize,
        state_dim: usize,
        space: ActionSpace,
        net: &NetConfig,
        params: &ParameterSet,
        cfg: &TrainConfig,
    ) -> Result<Self> {
        let actor_params = params.filter_prefix(ACTOR_PREFIX);
        let critic_params = params.filter_prefix(CRITIC_PREFIX);
        let actor = PolicyNet::bind(obs_dim, 1, space, net, ACTOR_PREFIX, &actor_params)?;
        let critic = ValueNet::bind(state_dim, net, CRITIC_PREFIX, &critic_params)?;
        Ok(Self {
            actor_opt: AdamState::new(&actor_params, AdamConfig::with_lr(cfg.actor_lr())),
            critic_opt: AdamState::new(&critic_params, AdamConfig::with_lr(cfg.critic_lr())),
            actor,
            critic,
            actor_params,
            critic_params,
        })
    }

    pub fn parameters(&self) -> ParameterSet {
        let mut all = self.actor_params.clone();
        all.extend(self.critic_params.clone()).expect("disjoint prefixes");
        all
    }

    /// Content hash of actor and critic parameters.
    pub fn checksum(&self) -> u64 {
        self.actor_params.checksum().rotate_left(1) ^ self.critic_params.checksum()
    }

    pub fn policy(&self, obs: &[f64]) -> Result<ActionDistribution> {
        Ok(self.actor.distributions(&self.actor_params, obs)?.remove(0))
    }

    pub fn value(&self, state: &[f64]) -> Result<f64> {
        self.critic.value(&self.critic_params, state)
    }

    /// GAE over shaped rewards and a critic regression step. Returns the
    /// advantages per episode.
    pub(crate) fn update_critic(
        &mut self,
        episodes: &[Episode],
        shaped: &[Vec<f64>],
        cfg: &TrainConfig,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<Vec<f64>>> {
        let mut advs = Vec::with_capacity(episodes.len());
        let mut samples = Vec::new();
        for (ep, rewards) in episodes.iter().zip(shaped) {
            let values: Vec<f64> = ep.records.iter().map(|r| self.value(&r.state)).collect::<Result<_>>()?;
            let dones: Vec<bool> = ep.records.iter().map(|r| r.done && ep.terminated).collect();
            let last = if ep.terminated { 0.0 } else { self.value(&ep.last.state)? };
            let scaled: Vec<f64> = rewards.iter().map(|r| r * cfg.reward_scale).collect();
            let (adv, ret) = compute_gae(&scaled, &values, &dones, last, cfg.gamma, cfg.gae_lambda);
            samples.extend(ep.records.iter().zip(&ret).map(|(r, t)| ValueSample {
                input: r.state.clone(),
                target: *t,
            }));
            advs.push(adv);
        }
        value_update(
            &self.critic,
            &mut self.critic_params,
            &mut self.critic_opt,
            &samples,
            cfg.ppo_epoch,
            cfg.mini_batch_num,
            cfg.huber(),
            cfg.max_grad_norm,
            rng,
        )?;
        Ok(advs)
    }

    pub(crate) fn update_policy(
        &mut self,
        episodes: &[Episode],
        advantages: &[Vec<f64>],
        settings: &PpoSettings,
        rng: &mut ChaCha8Rng,
    ) -> Result<PpoStats> {
        let settings = PpoSettings {
            ratio_mode: RatioMode::Joint,
            ..settings.clone()
        };
        let mut samples = Vec::new();
        for (ep, adv) in episodes.iter().zip(advantages) {
            for (t, r) in ep.records.iter().enumerate() {
                let slot = r.adversary_slot.expect("attack episodes have an adversary");
                samples.push(PolicySample {
                    input: r.obs[slot].clone(),
                    actions: vec![r.actions[slot].clone()],
                    old_log_probs: vec![ep.log_probs[t][slot]],
                    advantage: adv[t],
                });
            }
        }
        ppo_policy_update(&self.actor, &mut self.actor_params, &mut self.actor_opt, &samples, &settings, rng)
    }

    #[cfg(test)]
    pub(crate) fn poison_for_test(&mut self) {
        for b in self.critic_params.blocks_mut() {
            b.values.iter_mut().for_each(|v| *v = f64::NAN);
        }
    }
}

impl SlotPolicy for AdversaryAgent {
    fn act(&self, _slot: usize, obs: &[f64], rng: &mut ChaCha8Rng, deterministic: bool) -> Result<(Action, f64)> {
        let d = self.policy(obs)?;
        let a = if deterministic { d.mode() } else { d.sample(rng) };
        let lp = d.log_prob(&a);
        Ok((a, lp))
    }
}

/// Uniformly random actions over the action set (a no-learning control).
#[derive(Debug, Clone)]
pub struct RandomPolicy {
    pub space: ActionSpace,
}

impl SlotPolicy for RandomPolicy {
    fn act(&self, _slot: usize, _obs: &[f64], rng: &mut ChaCha8Rng, _deterministic: bool) -> Result<(Action, f64)> {
        Ok(match &self.space {
            ActionSpace::Discrete { n } => (Action::Discrete(rng.random_range(0..*n)), -(*n as f64).ln()),
            ActionSpace::Continuous { dim, low, high } => (
                Action::Continuous((0..*dim).map(|_| rng.random_range(*low..*high)).collect()),
                -self.space.log_volume(),
            ),
        })
    }
}
