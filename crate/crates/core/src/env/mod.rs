//! Partially observable stochastic games with one adversary slot.
//!
//! Both built-in environments expose the same [`MultiAgentEnv`] interface.
//! Agents are addressed by slot index; at most one slot is designated the
//! adversary, which changes only how the adversary reward (and, for
//! GatherGrid, early termination) is computed. Victim training runs with no
//! adversary slot.

pub mod export;
pub mod gathergrid;
pub mod rendezvous;

use serde::{Deserialize, Serialize};

use crate::error::{AmiError, Result};
use crate::nn::{Action, ActionSpace};

pub use gathergrid::{GatherGrid, GatherGridConfig};
pub use rendezvous::{Rendezvous, RendezvousConfig, SwarmState};

/// Static description of a game.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosgSpec {
    pub n_victims: usize,
    pub n_adversaries: usize,
    pub state_dim: usize,
    pub obs_dim: usize,
    pub action_space: ActionSpace,
    pub max_episode_len: usize,
    pub gamma: f64,
}

impl PosgSpec {
    pub fn n_agents(&self) -> usize {
        self.n_victims + self.n_adversaries
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_adversaries != 1 {
            return Err(AmiError::Config("exactly one adversary slot is supported".into()));
        }
        if self.n_victims == 0 || self.max_episode_len == 0 {
            return Err(AmiError::Config("need >= 1 victim and episode length >= 1".into()));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(AmiError::Config(format!("gamma {} outside (0, 1]", self.gamma)));
        }
        Ok(())
    }
}

/// Result of a reset: global state and one observation per slot.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub state: Vec<f64>,
    pub obs: Vec<Vec<f64>>,
}

/// Result of one joint step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub next: Observation,
    pub team_reward: f64,
    pub adversary_reward: f64,
    /// Natural episode end (no bootstrap).
    pub terminated: bool,
    /// Time limit reached.
    pub truncated: bool,
    /// Some submitted action was outside the action box and got clipped.
    pub clipped: bool,
}

impl StepOutcome {
    pub fn done(&self) -> bool {
        self.terminated || self.truncated
    }
}

/// One timestep of an episode transcript.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: usize,
    pub state: Vec<f64>,
    pub obs: Vec<Vec<f64>>,
    /// Joint action in slot order.
    pub actions: Vec<Action>,
    pub adversary_slot: Option<usize>,
    pub adversary_reward: f64,
    pub team_reward: f64,
    pub done: bool,
    pub clipped: bool,
}

impl StepRecord {
    pub fn adversary_action(&self) -> Option<&Action> {
        self.adversary_slot.map(|s| &self.actions[s])
    }

    pub fn victim_actions(&self) -> Vec<&Action> {
        self.actions
            .iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != self.adversary_slot)
            .map(|(_, a)| a)
            .collect()
    }
}

pub trait MultiAgentEnv: Send {
    fn spec(&self) -> &PosgSpec;
    /// Deterministic in `seed`.
    fn reset(&mut self, seed: u64) -> Observation;
    fn step(&mut self, actions: &[Action]) -> Result<StepOutcome>;
    fn adversary_slot(&self) -> Option<usize>;
    fn set_adversary_slot(&mut self, slot: Option<usize>) -> Result<()>;
    fn t(&self) -> usize;
    fn observe(&self) -> Observation;
}

/// Which built-in environment to build, with its settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum EnvConfig {
    Rendezvous(RendezvousConfig),
    Gathergrid(GatherGridConfig),
}

impl EnvConfig {
    pub fn build(&self) -> Result<Box<dyn MultiAgentEnv>> {
        Ok(match self {
            EnvConfig::Rendezvous(c) => Box::new(Rendezvous::new(c.clone())?),
            EnvConfig::Gathergrid(c) => Box::new(GatherGrid::new(c.clone())?),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            EnvConfig::Rendezvous(_) => "rendezvous",
            EnvConfig::Gathergrid(_) => "gathergrid",
        }
    }

    pub fn n_agents(&self) -> usize {
        match self {
            EnvConfig::Rendezvous(c) => c.n_agents,
            EnvConfig::Gathergrid(c) => c.n_agents,
        }
    }

    pub fn max_episode_len(&self) -> usize {
        match self {
            EnvConfig::Rendezvous(c) => c.max_episode_len,
            EnvConfig::Gathergrid(c) => c.max_episode_len,
        }
    }

    pub fn set_max_episode_len(&mut self, t: usize) {
        match self {
            EnvConfig::Rendezvous(c) => c.max_episode_len = t,
            EnvConfig::Gathergrid(c) => c.max_episode_len = t,
        }
    }
}

pub(crate) fn check_slot(slot: Option<usize>, n_agents: usize) -> Result<()> {
    match slot {
        Some(s) if s >= n_agents => Err(AmiError::Config(format!("adversary slot {s} >= {n_agents} agents"))),
        _ => Ok(()),
    }
}
