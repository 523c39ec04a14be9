//! Experiment configuration: a versioned JSON document merged over a preset.
//! Keys that the preset does not know are rejected with the list of valid
//! keys at that level.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::attack::{AttackConfig, AttackMethod};
use crate::defense::{DetectorConfig, DualTrainingConfig};
use crate::env::{EnvConfig, GatherGridConfig, RendezvousConfig};
use crate::error::{AmiError, Result};
use crate::mappo::TrainConfig;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub env: EnvConfig,
    pub victims: TrainConfig,
    pub attack: AttackConfig,
    pub defense: DualTrainingConfig,
    pub detector: DetectorConfig,
    /// Episodes per class for detector training and for held-out testing.
    pub detection_episodes: usize,
    pub eval_episodes: usize,
    /// Seeds per experiment in sweeps and reports.
    pub seeds: usize,
}

/// Starting point that a user document is merged over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Hyperparameter table values.
    Table,
    /// Small budgets that finish in seconds to minutes on one core.
    Desk,
}

impl Preset {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "table" => Ok(Preset::Table),
            "desk" => Ok(Preset::Desk),
            _ => Err(AmiError::Config(format!("unknown preset `{s}` (table, desk)"))),
        }
    }
}

impl ExperimentConfig {
    pub fn preset(env_kind: &str, preset: Preset) -> Result<Self> {
        let env = match env_kind {
            "gathergrid" => EnvConfig::Gathergrid(GatherGridConfig::default()),
            "rendezvous" => EnvConfig::Rendezvous(RendezvousConfig::default()),
            _ => return Err(AmiError::Config(format!("unknown env kind `{env_kind}` (gathergrid, rendezvous)"))),
        };
        let cfg = match preset {
            Preset::Table => Self::table(env),
            Preset::Desk => Self::desk(env),
        };
        Ok(cfg)
    }

    fn table(env: EnvConfig) -> Self {
        let victims = TrainConfig::for_env(&env);
        Self {
            schema_version: SCHEMA_VERSION,
            attack: AttackConfig::for_env(&env, AttackMethod::Ami),
            defense: DualTrainingConfig::new(victims.clone()),
            detector: DetectorConfig::default(),
            detection_episodes: 100,
            eval_episodes: victims.eval_episode,
            seeds: 5,
            victims,
            env,
        }
    }

    fn desk(env: EnvConfig) -> Self {
        let mut cfg = Self::table(env);
        let v = &mut cfg.victims;
        v.iterations = 100;
        v.lr = 1e-3;
        v.parallel_envs = 8;
        match cfg.env {
            EnvConfig::Gathergrid(_) => v.reward_scale = 0.1,
            EnvConfig::Rendezvous(ref mut r) => {
                r.max_episode_len = 50;
                v.actor_lr = Some(1e-3);
                v.critic_lr = Some(1e-2);
                v.mini_batch_num = 4;
            }
        }
        cfg.attack.train = cfg.victims.clone();
        cfg.defense.train = cfg.victims.clone();
        cfg.detector.epochs = 15;
        cfg.eval_episodes = 32;
        cfg
    }

    /// Merges `user` over the preset named by its `preset` hint and its
    /// `env.kind`. Unknown keys are rejected.
    pub fn from_value(user: &Value, preset: Preset) -> Result<Self> {
        let kind = user
            .get("env")
            .and_then(|e| e.get("kind"))
            .and_then(Value::as_str)
            .unwrap_or("gathergrid");
        if let Some(v) = user.get("schema_version") {
            if v.as_u64() != Some(SCHEMA_VERSION as u64) {
                return Err(AmiError::Config(format!("unsupported schema_version {v} (expected {SCHEMA_VERSION})")));
            }
        }
        let base = serde_json::to_value(Self::preset(kind, preset)?)?;
        let merged = merge(base, user, "")?;
        let cfg: Self = serde_json::from_value(merged).map_err(|e| AmiError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>, preset: Preset) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| AmiError::path(path, e))?;
        let user: Value = serde_json::from_str(&text).map_err(|e| AmiError::Config(format!("{}: {e}", path.display())))?;
        Self::from_value(&user, preset)
    }

    pub fn validate(&self) -> Result<()> {
        self.victims.validate()?;
        self.attack.validate(&self.env)?;
        self.defense.train.validate()?;
        if self.seeds == 0 || self.eval_episodes == 0 || self.detection_episodes < 2 {
            return Err(AmiError::Config("seeds, eval_episodes must be >= 1 and detection_episodes >= 2".into()));
        }
        Ok(())
    }
}

/// Recursively overlays `user` onto `base`. Objects merge key by key and
/// anything else replaces. A key missing from `base` is an error.
fn merge(base: Value, user: &Value, at: &str) -> Result<Value> {
    match (base, user) {
        (Value::Object(mut b), Value::Object(u)) => {
            for (k, v) in u {
                let here = if at.is_empty() { k.clone() } else { format!("{at}.{k}") };
                match b.remove(k) {
                    Some(old) => {
                        let new = merge(old, v, &here)?;
                        b.insert(k.clone(), new);
                    }
                    None => {
                        let mut valid: Vec<&String> = b.keys().collect();
                        valid.sort();
                        let valid: Vec<&str> = valid.into_iter().map(String::as_str).collect();
                        return Err(AmiError::Config(format!(
                            "unknown key `{here}`; valid keys here: {}",
                            valid.join(", ")
                        )));
                    }
                }
            }
            Ok(Value::Object(b))
        }
        (_, u) => Ok(u.clone()),
    }
}
