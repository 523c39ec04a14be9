use serde::{Deserialize, Serialize};

use crate::attack::{evaluate_attack, run_attack, AdversaryAgent, AttackConfig};
use crate::env::EnvConfig;
use crate::error::{AmiError, Result};
use crate::harness::Seeder;
use crate::mappo::{train_victims_from, CurvePoint, FrozenVictims, Intruder, TrainConfig, VictimPolicySet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DualTrainingConfig {
    pub train: TrainConfig,
    /// Probability that an episode contains the frozen adversary.
    pub mix: f64,
    pub adversary_slot: usize,
    /// Rounds of training. Every round after the first trains a fresh
    /// adversary against the hardened victims and hardens against it.
    pub rounds: usize,
}

impl DualTrainingConfig {
    pub fn new(train: TrainConfig) -> Self {
        Self {
            train,
            mix: 0.5,
            adversary_slot: 0,
            rounds: 1,
        }
    }
}

/// Continues training `victims` with the frozen `adversary` present in a
/// random half (by default) of the episodes. Returns the learning curve of
/// every round, concatenated.
pub fn dual_adversarial_train(
    victims: &mut VictimPolicySet,
    adversary: &AdversaryAgent,
    env: &EnvConfig,
    cfg: &DualTrainingConfig,
    attack: Option<&AttackConfig>,
    seeder: &Seeder,
) -> Result<Vec<CurvePoint>> {
    if !(cfg.mix > 0.0 && cfg.mix < 1.0) {
        return Err(AmiError::Config(format!("mix {} must lie in (0, 1)", cfg.mix)));
    }
    if cfg.rounds == 0 {
        return Err(AmiError::Config("rounds must be >= 1".into()));
    }
    if cfg.rounds > 1 && attack.is_none() {
        return Err(AmiError::Config("more than one round needs an attack config".into()));
    }
    let mut current = adversary.clone();
    let mut curve = Vec::new();
    for round in 0..cfg.rounds {
        if round > 0 {
            let frozen = victims.clone().freeze();
            let attack = attack.expect("checked above");
            let outcome = run_attack(env, &frozen, attack, &seeder.child(1000 + round as u64))?;
            current = outcome.run.adversary;
        }
        let checksum = current.checksum();
        let intruder = Intruder {
            policy: &current,
            slot: cfg.adversary_slot,
            mix: cfg.mix,
        };
        curve.extend(train_victims_from(victims, env, &cfg.train, &seeder.child(round as u64), Some(&intruder))?);
        if current.checksum() != checksum {
            return Err(AmiError::Integrity("frozen adversary changed during adversarial training".into()));
        }
    }
    Ok(curve)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    /// A fresh adversary in the slot used for hardening.
    ReAmi,
    /// A fresh adversary in some other slot.
    PosAmi,
}

impl Protocol {
    pub fn name(self) -> &'static str {
        match self {
            Protocol::ReAmi => "re-ami",
            Protocol::PosAmi => "pos-ami",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolRow {
    pub protocol: Protocol,
    pub slot: usize,
    pub seed: u64,
    pub adv_reward_mean: f64,
    pub adv_reward_ci95: f64,
    pub team_reward_mean: f64,
}

/// Trains fresh adversaries against `victims` and evaluates them: one in
/// the hardening slot (re-attack) and one in every other slot (position
/// shift), for every seed.
pub fn rerun_attack_protocols(
    victims: &FrozenVictims,
    env: &EnvConfig,
    attack: &AttackConfig,
    seeds: &[u64],
    protocols: &[Protocol],
    eval_episodes: usize,
) -> Result<Vec<ProtocolRow>> {
    let home = attack.adversary_slot;
    let mut rows = Vec::new();
    for &protocol in protocols {
        let slots: Vec<usize> = match protocol {
            Protocol::ReAmi => vec![home],
            Protocol::PosAmi => (0..victims.n_agents()).filter(|s| *s != home).collect(),
        };
        for slot in slots {
            for &seed in seeds {
                let cfg = AttackConfig {
                    adversary_slot: slot,
                    ..attack.clone()
                };
                let seeder = Seeder::new(seed);
                let out = run_attack(env, victims, &cfg, &seeder)?;
                let eval_env = cfg.train.env_for(env);
                let report = evaluate_attack(Some(&out.run.adversary), victims, &eval_env, slot, eval_episodes, &seeder.child(9))?;
                rows.push(ProtocolRow {
                    protocol,
                    slot,
                    seed,
                    adv_reward_mean: report.adversary.mean,
                    adv_reward_ci95: report.adversary.ci95,
                    team_reward_mean: report.team.mean,
                });
            }
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attack::AttackMethod;
    use crate::env::GatherGridConfig;
    use crate::harness::Stream;

    fn small() -> (EnvConfig, TrainConfig) {
        let env = EnvConfig::Gathergrid(GatherGridConfig {
            n_agents: 3,
            grid: 4,
            max_episode_len: 8,
            ..GatherGridConfig::default()
        });
        let train = TrainConfig {
            parallel_envs: 2,
            iterations: 2,
            hidden_dim: 8,
            lr: 1e-3,
            ..TrainConfig::discrete()
        };
        (env, train)
    }

    fn adversary(env: &EnvConfig, train: &TrainConfig) -> AdversaryAgent {
        let spec = env.build().unwrap().spec().clone();
        AdversaryAgent::new(spec.obs_dim, spec.state_dim, spec.action_space, train, &mut Seeder::new(1).rng(Stream::AdversaryInit, 0)).unwrap()
    }

    #[test]
    fn adversary_is_never_updated() {
        let (env, train) = small();
        let spec = env.build().unwrap().spec().clone();
        let mut v = VictimPolicySet::init(&spec, &train.net_config(), true, &mut Seeder::new(2).rng(Stream::VictimInit, 0)).unwrap();
        let adv = adversary(&env, &train);
        let before = adv.checksum();
        let before_v = v.checksum();
        let curve = dual_adversarial_train(&mut v, &adv, &env, &DualTrainingConfig::new(train), None, &Seeder::new(3)).unwrap();
        assert_eq!(curve.len(), 2);
        assert_eq!(adv.checksum(), before);
        assert_ne!(v.checksum(), before_v);
    }

    #[test]
    fn mix_must_be_interior() {
        let (env, train) = small();
        let spec = env.build().unwrap().spec().clone();
        let mut v = VictimPolicySet::init(&spec, &train.net_config(), true, &mut Seeder::new(2).rng(Stream::VictimInit, 0)).unwrap();
        let adv = adversary(&env, &train);
        for mix in [0.0, 1.0, -0.1] {
            let cfg = DualTrainingConfig { mix, ..DualTrainingConfig::new(train.clone()) };
            assert!(dual_adversarial_train(&mut v, &adv, &env, &cfg, None, &Seeder::new(3)).is_err());
        }
        let cfg = DualTrainingConfig { rounds: 2, ..DualTrainingConfig::new(train) };
        assert!(dual_adversarial_train(&mut v, &adv, &env, &cfg, None, &Seeder::new(3)).is_err());
    }

    #[test]
    fn protocol_rows_cover_every_slot_and_seed() {
        let (env, train) = small();
        let spec = env.build().unwrap().spec().clone();
        let v = VictimPolicySet::init(&spec, &train.net_config(), true, &mut Seeder::new(2).rng(Stream::VictimInit, 0))
            .unwrap()
            .freeze();
        let attack = AttackConfig {
            train: TrainConfig { iterations: 1, ..train },
            ..AttackConfig::for_env(&env, AttackMethod::Ami)
        };
        let rows = rerun_attack_protocols(&v, &env, &attack, &[1, 2], &[Protocol::ReAmi, Protocol::PosAmi], 2).unwrap();
        assert_eq!(rows.len(), 2 + 2 * 2);
        let pos: Vec<usize> = rows.iter().filter(|r| r.protocol == Protocol::PosAmi && r.seed == 1).map(|r| r.slot).collect();
        assert_eq!(pos, vec![1, 2]);
        assert!(rows.iter().filter(|r| r.protocol == Protocol::ReAmi).all(|r| r.slot == 0));
        assert_eq!(v.parameter_reads(), 0);
    }
}
