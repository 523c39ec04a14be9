//! Multi-agent PPO for cooperative victims: decentralized actors, a
//! centralized critic over the global state, GAE and clipped surrogate
//! updates.

pub mod gae;
pub mod ppo;
pub mod rollout;
pub mod train;
pub mod victims;

pub use gae::compute_gae;
pub use ppo::{
    clipped_surrogate, normalize_advantages, policy_objective, ppo_policy_update, value_loss, value_update,
    PolicySample, PpoSettings, PpoStats, RatioMode, ValueSample,
};
pub use rollout::{run_episode, Episode};
pub(crate) use train::collect_parallel;
pub use train::{evaluate_policy, train_victims, train_victims_from, CurvePoint, Intruder, TrainConfig};
pub use victims::{FrozenVictims, SlotPolicy, VictimPolicySet};
