//! The MAPPO victim trainer.

use log::{debug, info};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::gae::compute_gae;
use super::ppo::{ppo_policy_update, value_update, PolicySample, PpoSettings, RatioMode, ValueSample};
use super::rollout::{run_episode, Episode};
use super::victims::{SlotPolicy, VictimPolicySet};
use crate::env::EnvConfig;
use crate::error::{AmiError, Result};
use crate::harness::stats::summarize;
use crate::harness::{Seeder, Stream};
use crate::nn::{Activation, AdamConfig, AdamState, NetConfig};

/// Shared on-policy hyperparameters. Every key has a default; `lr` is the
/// fallback for `actor_lr` and `critic_lr` when those are unset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub actor_lr: Option<f64>,
    pub critic_lr: Option<f64>,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub ppo_clip: f64,
    pub ppo_epoch: usize,
    pub mini_batch_num: usize,
    pub entropy_coef: f64,
    /// Episodes collected per iteration, one per worker.
    pub parallel_envs: usize,
    pub max_grad_norm: f64,
    pub huber_loss: bool,
    pub huber_delta: f64,
    pub eval_episode: usize,
    pub hidden_dim: usize,
    pub hidden_layer: usize,
    pub activation: Activation,
    pub gain: f64,
    pub std_y_coef: f64,
    pub std_x_coef: f64,
    pub optimizer: String,
    pub actor_network: String,
    /// Overrides the environment's episode limit when set.
    pub max_episode_len: Option<usize>,
    pub iterations: usize,
    /// Multiplies rewards before advantage estimation (reporting is unscaled).
    pub reward_scale: f64,
    pub share_actor_params: bool,
}

impl TrainConfig {
    /// Defaults for discrete-action games.
    pub fn discrete() -> Self {
        Self {
            lr: 1e-4,
            actor_lr: None,
            critic_lr: None,
            gamma: 0.99,
            gae_lambda: 0.95,
            ppo_clip: 0.2,
            ppo_epoch: 4,
            mini_batch_num: 1,
            entropy_coef: 0.01,
            parallel_envs: 32,
            max_grad_norm: 10.0,
            huber_loss: false,
            huber_delta: 10.0,
            eval_episode: 20,
            hidden_dim: 64,
            hidden_layer: 1,
            activation: Activation::Relu,
            gain: 0.01,
            std_y_coef: 0.5,
            std_x_coef: 1.0,
            optimizer: "adam".into(),
            actor_network: "mlp".into(),
            max_episode_len: None,
            iterations: 200,
            reward_scale: 1.0,
            share_actor_params: true,
        }
    }

    /// Defaults for the continuous swarm task.
    pub fn continuous() -> Self {
        Self {
            lr: 5e-5,
            actor_lr: Some(5e-5),
            critic_lr: Some(5e-3),
            mini_batch_num: 40,
            huber_loss: true,
            ppo_epoch: 5,
            eval_episode: 32,
            ..Self::discrete()
        }
    }

    pub fn for_env(env: &EnvConfig) -> Self {
        match env {
            EnvConfig::Gathergrid(_) => Self::discrete(),
            EnvConfig::Rendezvous(_) => Self::continuous(),
        }
    }

    pub fn actor_lr(&self) -> f64 {
        self.actor_lr.unwrap_or(self.lr)
    }

    pub fn critic_lr(&self) -> f64 {
        self.critic_lr.unwrap_or(self.lr)
    }

    pub fn net_config(&self) -> NetConfig {
        NetConfig {
            hidden_dim: self.hidden_dim,
            hidden_layers: self.hidden_layer,
            activation: self.activation,
            output_gain: self.gain,
            std_y_coef: self.std_y_coef,
            std_x_coef: self.std_x_coef,
        }
    }

    pub fn ppo_settings(&self, ratio_mode: RatioMode) -> PpoSettings {
        PpoSettings {
            clip: self.ppo_clip,
            epochs: self.ppo_epoch,
            minibatches: self.mini_batch_num,
            entropy_coef: self.entropy_coef,
            max_grad_norm: self.max_grad_norm,
            ratio_mode,
            normalize_advantages: true,
        }
    }

    pub fn huber(&self) -> Option<f64> {
        self.huber_loss.then_some(self.huber_delta)
    }

    /// The environment config with this run's episode limit applied.
    pub fn env_for(&self, env: &EnvConfig) -> EnvConfig {
        let mut e = env.clone();
        if let Some(t) = self.max_episode_len {
            e.set_max_episode_len(t);
        }
        e
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(AmiError::Config(m));
        if !(self.ppo_clip > 0.0 && self.ppo_clip < 1.0) {
            return bad(format!("ppo_clip {} outside (0, 1)", self.ppo_clip));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad(format!("gamma {} outside (0, 1]", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad(format!("gae_lambda {} outside [0, 1]", self.gae_lambda));
        }
        for (k, v) in [("lr", self.lr), ("actor_lr", self.actor_lr()), ("critic_lr", self.critic_lr())] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{k} must be positive"));
            }
        }
        if self.ppo_epoch == 0 || self.mini_batch_num == 0 || self.parallel_envs == 0 || self.hidden_dim == 0 {
            return bad("ppo_epoch, mini_batch_num, parallel_envs and hidden_dim must be >= 1".into());
        }
        if self.optimizer != "adam" {
            return bad(format!("unsupported optimizer `{}` (only `adam`)", self.optimizer));
        }
        if self.actor_network != "mlp" {
            return bad(format!("unsupported actor_network `{}` (only `mlp`)", self.actor_network));
        }
        if self.max_episode_len == Some(0) {
            return bad("max_episode_len must be >= 1".into());
        }
        Ok(())
    }
}

/// One row of a learning curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub iteration: usize,
    pub env_steps: usize,
    pub reward_mean: f64,
    pub reward_ci95: f64,
}

/// A fixed policy that takes over one slot in a random subset of episodes.
pub struct Intruder<'a> {
    pub policy: &'a dyn SlotPolicy,
    pub slot: usize,
    /// Probability that an episode has the intruder present.
    pub mix: f64,
}

/// Collects `k` episodes in parallel workers; results are ordered by worker.
/// Worker `w` of iteration `iter` uses episode index `iter * k + w` for all
/// of its seeds.
pub(crate) fn collect_parallel<F>(k: usize, iter: usize, work: F) -> Result<Vec<Episode>>
where
    F: Fn(u64) -> Result<Episode> + Sync,
{
    let base = (iter * k) as u64;
    if k == 1 {
        return Ok(vec![work(base)?]);
    }
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..k as u64).map(|w| scope.spawn({
            let work = &work;
            move || work(base + w)
        })).collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(AmiError::Protocol("rollout worker panicked".into()))))
            .collect()
    })
}

/// A victim episode plus which slots were controlled by the learners.
struct VictimEpisode {
    episode: Episode,
    learner: Vec<bool>,
}

/// Trains fresh victims from `seeder` and returns them with their curve.
pub fn train_victims(env: &EnvConfig, cfg: &TrainConfig, seeder: &Seeder) -> Result<(VictimPolicySet, Vec<CurvePoint>)> {
    cfg.validate()?;
    let env = cfg.env_for(env);
    let spec = env.build()?.spec().clone();
    let mut rng = seeder.rng(Stream::VictimInit, 0);
    let mut victims = VictimPolicySet::init(&spec, &cfg.net_config(), cfg.share_actor_params, &mut rng)?;
    let curve = train_victims_from(&mut victims, &env, cfg, seeder, None)?;
    Ok((victims, curve))
}

/// Continues training `victims` for `cfg.iterations`. With an intruder, each
/// episode flips a coin and the intruder controls its slot with probability
/// `mix`; intruder actions are never used as learner samples.
pub fn train_victims_from(
    victims: &mut VictimPolicySet,
    env: &EnvConfig,
    cfg: &TrainConfig,
    seeder: &Seeder,
    intruder: Option<&Intruder>,
) -> Result<Vec<CurvePoint>> {
    cfg.validate()?;
    let env = cfg.env_for(env);
    let n = victims.n_agents();
    if let Some(i) = intruder {
        if i.slot >= n || !(0.0..=1.0).contains(&i.mix) {
            return Err(AmiError::Config(format!("bad intruder slot {} / mix {}", i.slot, i.mix)));
        }
    }
    let mut actor_opts: Vec<AdamState> = victims
        .actor_params
        .iter()
        .map(|p| AdamState::new(p, AdamConfig::with_lr(cfg.actor_lr())))
        .collect();
    let mut critic_opt = AdamState::new(&victims.critic_params, AdamConfig::with_lr(cfg.critic_lr()));
    let settings = cfg.ppo_settings(RatioMode::Joint);
    let k = cfg.parallel_envs;
    let mut env_steps = 0;
    let mut curve = Vec::with_capacity(cfg.iterations);

    for iter in 0..cfg.iterations {
        let snapshot: &VictimPolicySet = victims;
        let batch: Vec<Episode> = collect_parallel(k, iter, |e| {
            let mut env_i = env.build()?;
            let present = match intruder {
                Some(i) => seeder.rng(Stream::MixCoin, e).random_bool(i.mix),
                None => false,
            };
            let slot = intruder.filter(|_| present).map(|i| i.slot);
            env_i.set_adversary_slot(slot)?;
            let mut vr = seeder.rng(Stream::VictimAct, e);
            let mut ar = seeder.rng(Stream::AdversaryAct, e);
            run_episode(env_i.as_mut(), seeder.derive(Stream::EnvReset, e), &mut |s, o| match (slot, intruder) {
                (Some(sl), Some(i)) if sl == s => i.policy.act(s, &o.obs[s], &mut ar, false),
                _ => snapshot.act(s, &o.obs[s], &mut vr, false),
            })
        })?;
        let batch: Vec<VictimEpisode> = batch
            .into_iter()
            .map(|episode| {
                let learner = (0..n).map(|s| episode.records[0].adversary_slot != Some(s)).collect();
                VictimEpisode { episode, learner }
            })
            .collect();

        let returns: Vec<f64> = batch.iter().map(|b| b.episode.team_return()).collect();
        let steps: usize = batch.iter().map(|b| b.episode.len()).sum();
        env_steps += steps;
        update_victims(victims, &batch, cfg, &settings, &mut actor_opts, &mut critic_opt, seeder, iter)
            .map_err(|e| match e {
                AmiError::Divergence(m) => AmiError::Divergence(format!("victim training iteration {iter}: {m}")),
                other => other,
            })?;
        let s = summarize(&returns);
        curve.push(CurvePoint {
            iteration: iter,
            env_steps,
            reward_mean: s.mean,
            reward_ci95: s.ci95,
        });
        if iter % 10 == 0 || iter + 1 == cfg.iterations {
            info!("victims iter {iter}: team return {:.3} +- {:.3}", s.mean, s.ci95);
        }
    }
    Ok(curve)
}

#[allow(clippy::too_many_arguments)]
fn update_victims(
    victims: &mut VictimPolicySet,
    batch: &[VictimEpisode],
    cfg: &TrainConfig,
    settings: &PpoSettings,
    actor_opts: &mut [AdamState],
    critic_opt: &mut AdamState,
    seeder: &Seeder,
    iter: usize,
) -> Result<()> {
    let mut policy_samples: Vec<Vec<PolicySample>> = vec![Vec::new(); victims.actors.len()];
    let mut value_samples = Vec::new();
    for b in batch {
        let ep = &b.episode;
        let values: Vec<f64> = ep.records.iter().map(|r| victims.value(&r.state)).collect::<Result<_>>()?;
        let rewards: Vec<f64> = ep.records.iter().map(|r| r.team_reward * cfg.reward_scale).collect();
        let dones: Vec<bool> = ep.records.iter().map(|r| r.done && ep.terminated).collect();
        let last = if ep.terminated { 0.0 } else { victims.value(&ep.last.state)? };
        let (adv, ret) = compute_gae(&rewards, &values, &dones, last, cfg.gamma, cfg.gae_lambda);
        for (t, r) in ep.records.iter().enumerate() {
            value_samples.push(ValueSample {
                input: r.state.clone(),
                target: ret[t],
            });
            for s in (0..victims.n_agents()).filter(|s| b.learner[*s]) {
                policy_samples[victims.actor_index(s)].push(PolicySample {
                    input: victims.actor_input(s, &r.obs[s]),
                    actions: vec![r.actions[s].clone()],
                    old_log_probs: vec![ep.log_probs[t][s]],
                    advantage: adv[t],
                });
            }
        }
    }
    if adv_non_finite(&policy_samples) {
        return Err(AmiError::Divergence("non-finite advantages".into()));
    }
    let mut mb = seeder.rng(Stream::VictimMinibatch, iter as u64);
    for (k, samples) in policy_samples.iter().enumerate() {
        let stats = ppo_policy_update(
            &victims.actors[k],
            &mut victims.actor_params[k],
            &mut actor_opts[k],
            samples,
            settings,
            &mut mb,
        )?;
        debug!("actor {k}: {stats:?}");
    }
    let vloss = value_update(
        &victims.critic,
        &mut victims.critic_params,
        critic_opt,
        &value_samples,
        cfg.ppo_epoch,
        cfg.mini_batch_num,
        cfg.huber(),
        cfg.max_grad_norm,
        &mut mb,
    )?;
    if !vloss.is_finite() {
        return Err(AmiError::Divergence(format!("critic loss {vloss}")));
    }
    Ok(())
}

fn adv_non_finite(samples: &[Vec<PolicySample>]) -> bool {
    samples.iter().flatten().any(|s| !s.advantage.is_finite())
}

/// Runs `episodes` evaluation episodes with every slot driven by `policy`
/// (deterministic mode optional) and returns them.
pub fn evaluate_policy(
    policy: &dyn SlotPolicy,
    env: &EnvConfig,
    episodes: usize,
    seeder: &Seeder,
    deterministic: bool,
) -> Result<Vec<Episode>> {
    let mut e = env.build()?;
    (0..episodes as u64)
        .map(|i| {
            let mut rng = seeder.rng(Stream::Evaluation, i);
            run_episode(e.as_mut(), seeder.derive(Stream::Evaluation, i), &mut |s, o| {
                policy.act(s, &o.obs[s], &mut rng, deterministic)
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::GatherGridConfig;

    fn tiny() -> (EnvConfig, TrainConfig) {
        let env = EnvConfig::Gathergrid(GatherGridConfig {
            n_agents: 3,
            grid: 4,
            max_episode_len: 10,
            ..GatherGridConfig::default()
        });
        let cfg = TrainConfig {
            parallel_envs: 2,
            iterations: 3,
            hidden_dim: 8,
            lr: 1e-3,
            ..TrainConfig::discrete()
        };
        (env, cfg)
    }

    #[test]
    fn same_seed_same_curve() {
        let (env, cfg) = tiny();
        let (a, ca) = train_victims(&env, &cfg, &Seeder::new(9)).unwrap();
        let (b, cb) = train_victims(&env, &cfg, &Seeder::new(9)).unwrap();
        assert_eq!(ca, cb);
        assert_eq!(a.checksum(), b.checksum());
        assert_eq!(ca.len(), 3);
    }

    #[test]
    fn entropy_coefficient_changes_the_policy() {
        let (env, cfg) = tiny();
        let (a, _) = train_victims(&env, &cfg, &Seeder::new(2)).unwrap();
        let no_ent = TrainConfig {
            entropy_coef: 0.0,
            ..cfg
        };
        let (b, _) = train_victims(&env, &no_ent, &Seeder::new(2)).unwrap();
        assert_ne!(a.checksum(), b.checksum());
    }

    #[test]
    fn table_defaults() {
        let d = TrainConfig::discrete();
        assert_eq!((d.lr, d.ppo_epoch, d.mini_batch_num, d.parallel_envs), (1e-4, 4, 1, 32));
        assert_eq!(d.actor_lr(), d.lr);
        let c = TrainConfig::continuous();
        assert_eq!((c.actor_lr(), c.critic_lr(), c.mini_batch_num, c.ppo_epoch), (5e-5, 5e-3, 40, 5));
        assert_eq!(c.huber(), Some(10.0));
        assert!(TrainConfig {
            ppo_clip: 1.0,
            ..d.clone()
        }
        .validate()
        .is_err());
        assert!(TrainConfig { gamma: 0.0, ..d }.validate().is_err());
    }

    #[test]
    fn zero_mix_intruder_matches_plain_training() {
        let (env, cfg) = tiny();
        let seeder = Seeder::new(4);
        let spec = env.build().unwrap().spec().clone();
        let fresh = || {
            VictimPolicySet::init(&spec, &cfg.net_config(), true, &mut seeder.rng(Stream::VictimInit, 0)).unwrap()
        };
        let other = fresh();
        let mut a = fresh();
        let mut b = fresh();
        let ca = train_victims_from(&mut a, &env, &cfg, &seeder, None).unwrap();
        let intr = Intruder {
            policy: &other,
            slot: 0,
            mix: 0.0,
        };
        let cb = train_victims_from(&mut b, &env, &cfg, &seeder, Some(&intr)).unwrap();
        assert_eq!(ca, cb);
        assert_eq!(a.checksum(), b.checksum());
    }
}
