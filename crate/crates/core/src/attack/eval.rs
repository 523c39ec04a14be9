use serde::{Deserialize, Serialize};

use crate::env::EnvConfig;
use crate::error::{AmiError, Result};
use crate::harness::stats::{summarize, Summary};
use crate::harness::{Seeder, Stream};
use crate::mappo::{run_episode, FrozenVictims, SlotPolicy};

/// Deterministic evaluation of one adversary against frozen victims.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub adversary_returns: Vec<f64>,
    pub team_returns: Vec<f64>,
    pub adversary: Summary,
    pub team: Summary,
}

/// Runs `episodes` seeded episodes with `adversary` in `slot` and the
/// victims everywhere else, all in deterministic mode. With no adversary
/// the victim policy keeps control of the slot (the no-attack control);
/// the adversary reward is still measured for that slot.
pub fn evaluate_attack(
    adversary: Option<&dyn SlotPolicy>,
    victims: &FrozenVictims,
    env: &EnvConfig,
    slot: usize,
    episodes: usize,
    seeder: &Seeder,
) -> Result<EvalReport> {
    if episodes == 0 {
        return Err(AmiError::Config("evaluation needs at least one episode".into()));
    }
    let mut e = env.build()?;
    e.set_adversary_slot(Some(slot))?;
    let mut adversary_returns = Vec::with_capacity(episodes);
    let mut team_returns = Vec::with_capacity(episodes);
    for i in 0..episodes as u64 {
        let mut vr = seeder.rng(Stream::Evaluation, i);
        let mut ar = seeder.child(1).rng(Stream::Evaluation, i);
        let ep = run_episode(e.as_mut(), seeder.derive(Stream::Evaluation, i), &mut |s, o| match adversary {
            Some(a) if s == slot => a.act(s, &o.obs[s], &mut ar, true),
            _ => victims.act(s, &o.obs[s], &mut vr, true),
        })?;
        adversary_returns.push(ep.adversary_return());
        team_returns.push(ep.team_return());
    }
    Ok(EvalReport {
        adversary: summarize(&adversary_returns),
        team: summarize(&team_returns),
        adversary_returns,
        team_returns,
    })
}
