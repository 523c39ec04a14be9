//! Episode collection shared by victim training, attacks and evaluation.

use crate::env::{MultiAgentEnv, Observation, StepRecord};
use crate::error::{AmiError, Result};
use crate::nn::Action;

/// One collected episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub records: Vec<StepRecord>,
    /// `log_probs[t][slot]` of the sampled action (0 for scripted slots).
    pub log_probs: Vec<Vec<f64>>,
    /// Observation after the last step (bootstrap input on truncation).
    pub last: Observation,
    pub terminated: bool,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn team_return(&self) -> f64 {
        self.records.iter().map(|r| r.team_reward).sum()
    }

    pub fn adversary_return(&self) -> f64 {
        self.records.iter().map(|r| r.adversary_reward).sum()
    }

    pub fn truncated(&self) -> bool {
        !self.terminated
    }
}

/// Runs one episode from `seed`. `act(slot, obs)` is queried for every slot
/// in slot order at every step and returns the action and its log-prob.
pub fn run_episode(
    env: &mut dyn MultiAgentEnv,
    seed: u64,
    act: &mut dyn FnMut(usize, &Observation) -> Result<(Action, f64)>,
) -> Result<Episode> {
    let mut obs = env.reset(seed);
    let n = env.spec().n_agents();
    let slot = env.adversary_slot();
    let mut records = Vec::new();
    let mut log_probs = Vec::new();
    loop {
        let mut actions = Vec::with_capacity(n);
        let mut lps = Vec::with_capacity(n);
        for i in 0..n {
            let (a, lp) = act(i, &obs)?;
            actions.push(a);
            lps.push(lp);
        }
        let out = env.step(&actions)?;
        if !out.team_reward.is_finite() || !out.adversary_reward.is_finite() {
            return Err(AmiError::Divergence(format!("non-finite reward at t={}", records.len())));
        }
        let done = out.done();
        records.push(StepRecord {
            t: records.len(),
            state: std::mem::take(&mut obs.state),
            obs: std::mem::take(&mut obs.obs),
            actions,
            adversary_slot: slot,
            adversary_reward: out.adversary_reward,
            team_reward: out.team_reward,
            done,
            clipped: out.clipped,
        });
        log_probs.push(lps);
        obs = out.next;
        if done {
            return Ok(Episode {
                records,
                log_probs,
                last: obs,
                terminated: out.terminated,
            });
        }
    }
}
