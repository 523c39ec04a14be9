//! Policy-based attacks: the adversary joins the game in one slot and is
//! trained on the adversary reward, optionally shaped by an influence term.
//!
//! All methods share one training loop. Every iteration collects episodes,
//! fits the opponent model, updates the target oracle, computes the shaped
//! reward and finally updates the adversary.

mod adversary;
mod eval;
mod run;

pub use adversary::{AdversaryAgent, RandomPolicy, ACTOR_PREFIX, CRITIC_PREFIX};
pub use eval::{evaluate_attack, EvalReport};
pub use run::{run_attack, AttackOutcome, AttackRun, Event, MetricsRow, RewardStep, TargetRow};

use serde::{Deserialize, Serialize};

use crate::env::EnvConfig;
use crate::error::{AmiError, Result};
use crate::influence::DistanceMetric;
use crate::mappo::TrainConfig;
use crate::opponent::OpponentConfig;

/// Which influence term shapes the adversary reward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackMethod {
    /// Targeted unilateral influence (distance of the expected victim
    /// prediction to the oracle's targets).
    Ami,
    /// Adversary reward only; identical to `Ami` with zero weight.
    AdvPolicy,
    /// `Ami` plus the negated expected conditional entropy.
    AmiBilateral,
    /// Negated KL divergence of the expected prediction from uniform.
    AmiUntargeted,
    /// Full mutual information between adversary and victim actions.
    MiBaseline,
}

impl AttackMethod {
    pub const ALL: [AttackMethod; 5] = [
        Self::Ami,
        Self::AdvPolicy,
        Self::AmiBilateral,
        Self::AmiUntargeted,
        Self::MiBaseline,
    ];

    /// Short command-line name.
    pub fn cli_name(self) -> &'static str {
        match self {
            Self::Ami => "ami",
            Self::AdvPolicy => "adv-policy",
            Self::AmiBilateral => "bilateral",
            Self::AmiUntargeted => "untargeted",
            Self::MiBaseline => "mi",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.cli_name() == s)
            .ok_or_else(|| AmiError::Config(format!("unknown method `{s}` (ami, adv-policy, mi, bilateral, untargeted)")))
    }
}

/// Influence pieces available at one step, summed over victims.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InfluencePieces {
    /// `sum_i d(expected_i, target_i)`
    pub targeted: f64,
    /// `-sum_i E_a[H(p_i(. | a))]`
    pub majority: f64,
    /// `sum_i H(expected_i)`
    pub minority: f64,
    /// `-sum_i KL(expected_i || U)`
    pub untargeted: f64,
}

/// Raw (unweighted, unnormalized) influence term of `method`.
pub fn influence_term(method: AttackMethod, p: &InfluencePieces) -> f64 {
    match method {
        AttackMethod::Ami | AttackMethod::AdvPolicy => p.targeted,
        AttackMethod::AmiBilateral => p.targeted + p.majority,
        AttackMethod::AmiUntargeted => p.untargeted,
        AttackMethod::MiBaseline => p.minority + p.majority,
    }
}

/// `r + lambda * influence`, except that the baseline (and a zero weight)
/// adds nothing at all.
pub fn variant_reward(method: AttackMethod, adversary_reward: f64, lambda: f64, influence: f64) -> f64 {
    if method == AttackMethod::AdvPolicy || lambda == 0.0 {
        adversary_reward
    } else {
        adversary_reward + lambda * influence
    }
}

/// Attack settings. Learning rates of the opponent model and the oracle
/// fall back to the shared `lr`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackConfig {
    pub train: TrainConfig,
    pub method: AttackMethod,
    pub lambda: f64,
    /// `None` picks `l1` (discrete) or `prob` (continuous).
    pub metric: Option<DistanceMetric>,
    pub normalize_influence: bool,
    pub opp_lr: Option<f64>,
    pub opp_epochs: usize,
    pub tao_lr: Option<f64>,
    pub tao_critic_lr: Option<f64>,
    pub counterfactual_samples: usize,
    pub adversary_slot: usize,
}

impl AttackConfig {
    pub fn for_env(env: &EnvConfig, method: AttackMethod) -> Self {
        let lambda = match env {
            EnvConfig::Gathergrid(_) => 0.05,
            EnvConfig::Rendezvous(_) => 0.003,
        };
        Self {
            train: TrainConfig::for_env(env),
            method,
            lambda,
            metric: None,
            normalize_influence: true,
            opp_lr: None,
            opp_epochs: 4,
            tao_lr: None,
            tao_critic_lr: None,
            counterfactual_samples: 8,
            adversary_slot: 0,
        }
    }

    pub fn metric_for(&self, space: &crate::nn::ActionSpace) -> Result<DistanceMetric> {
        let m = self.metric.unwrap_or_else(|| DistanceMetric::default_for(space));
        if !m.compatible(space) {
            return Err(AmiError::Config(format!("metric `{}` does not fit this action space", m.name())));
        }
        Ok(m)
    }

    /// Weight actually applied to the influence term.
    pub fn effective_lambda(&self) -> f64 {
        if self.method == AttackMethod::AdvPolicy {
            0.0
        } else {
            self.lambda
        }
    }

    pub fn opponent_config(&self) -> OpponentConfig {
        OpponentConfig {
            lr: self.opp_lr.unwrap_or(self.train.lr),
            epochs: self.opp_epochs,
            mini_batch_num: self.train.mini_batch_num,
            max_grad_norm: self.train.max_grad_norm,
            counterfactual_samples: self.counterfactual_samples,
        }
    }

    pub fn validate(&self, env: &EnvConfig) -> Result<()> {
        self.train.validate()?;
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(AmiError::Config(format!("lambda {} must be finite and >= 0", self.lambda)));
        }
        if self.adversary_slot >= env.n_agents() {
            return Err(AmiError::Config(format!("adversary slot {} out of range", self.adversary_slot)));
        }
        if self.counterfactual_samples == 0 || self.opp_epochs == 0 {
            return Err(AmiError::Config("counterfactual_samples and opp_epochs must be >= 1".into()));
        }
        Ok(())
    }
}
