//! GatherGrid: agents on a square grid are rewarded for gathering.
//!
//! Actions: 0 stay, 1 north (+y), 2 south (-y), 3 east (+x), 4 west (-x).
//! Team reward is `-sum_i |p_i - c|_1` over all agents with `c` the centroid
//! of all agents. The adversary reward is the dispersal of the victims,
//! `sum_v |p_v - c_v|_1` with `c_v` the victim centroid. Episodes end when
//! every victim shares one cell or at the time limit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_slot, MultiAgentEnv, Observation, PosgSpec, StepOutcome};
use crate::error::{AmiError, Result};
use crate::nn::{Action, ActionSpace};

pub const N_ACTIONS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GatherGridConfig {
    pub n_agents: usize,
    pub grid: usize,
    pub max_episode_len: usize,
    pub gamma: f64,
    /// Blocked cells as `[x, y]`.
    pub obstacles: Vec<[usize; 2]>,
}

impl Default for GatherGridConfig {
    fn default() -> Self {
        Self {
            n_agents: 5,
            grid: 7,
            max_episode_len: 50,
            gamma: 0.99,
            obstacles: Vec::new(),
        }
    }
}

/// Manhattan distance from an integer cell to a real point.
fn manhattan(p: [i64; 2], c: [f64; 2]) -> f64 {
    (p[0] as f64 - c[0]).abs() + (p[1] as f64 - c[1]).abs()
}

fn centroid<'a>(ps: impl Iterator<Item = &'a [i64; 2]>) -> [f64; 2] {
    let mut n = 0.0;
    let mut c = [0.0; 2];
    for p in ps {
        c[0] += p[0] as f64;
        c[1] += p[1] as f64;
        n += 1.0;
    }
    if n > 0.0 {
        [c[0] / n, c[1] / n]
    } else {
        c
    }
}

/// `-sum_i |p_i - centroid(all)|_1`
pub fn team_reward(positions: &[[i64; 2]]) -> f64 {
    let c = centroid(positions.iter());
    -positions.iter().map(|p| manhattan(*p, c)).sum::<f64>()
}

/// `sum_v |p_v - centroid(victims)|_1` over every slot except `adversary`.
pub fn dispersal_reward(positions: &[[i64; 2]], adversary: Option<usize>) -> f64 {
    let victims: Vec<[i64; 2]> = positions
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != adversary)
        .map(|(_, p)| *p)
        .collect();
    let c = centroid(victims.iter());
    victims.iter().map(|p| manhattan(*p, c)).sum()
}

pub struct GatherGrid {
    cfg: GatherGridConfig,
    spec: PosgSpec,
    positions: Vec<[i64; 2]>,
    t: usize,
    adversary_slot: Option<usize>,
}

impl GatherGrid {
    pub fn new(cfg: GatherGridConfig) -> Result<Self> {
        if cfg.n_agents < 2 || cfg.grid < 2 {
            return Err(AmiError::Config("gathergrid needs >= 2 agents and grid >= 2".into()));
        }
        if cfg.obstacles.len() >= cfg.grid * cfg.grid {
            return Err(AmiError::Config("gathergrid has no free cells".into()));
        }
        let n = cfg.n_agents;
        let spec = PosgSpec {
            n_victims: n - 1,
            n_adversaries: 1,
            state_dim: 2 * n,
            obs_dim: 2 * n,
            action_space: ActionSpace::Discrete { n: N_ACTIONS },
            max_episode_len: cfg.max_episode_len,
            gamma: cfg.gamma,
        };
        spec.validate()?;
        Ok(Self {
            positions: vec![[0, 0]; n],
            cfg,
            spec,
            t: 0,
            adversary_slot: None,
        })
    }

    pub fn positions(&self) -> &[[i64; 2]] {
        &self.positions
    }

    pub fn set_positions(&mut self, positions: Vec<[i64; 2]>) -> Result<()> {
        if positions.len() != self.cfg.n_agents || positions.iter().any(|p| !self.free(*p)) {
            return Err(AmiError::Config("invalid gathergrid positions".into()));
        }
        self.positions = positions;
        Ok(())
    }

    fn free(&self, p: [i64; 2]) -> bool {
        let g = self.cfg.grid as i64;
        p[0] >= 0 && p[1] >= 0 && p[0] < g && p[1] < g && !self.cfg.obstacles.contains(&[p[0] as usize, p[1] as usize])
    }

    fn victims_colocated(&self) -> bool {
        let mut it = self
            .positions
            .iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != self.adversary_slot)
            .map(|(_, p)| p);
        match it.next() {
            Some(first) => it.all(|p| p == first),
            None => true,
        }
    }

    fn scale(&self) -> f64 {
        (self.cfg.grid - 1) as f64
    }
}

impl MultiAgentEnv for GatherGrid {
    fn spec(&self) -> &PosgSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Observation {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = self.cfg.grid;
        let free: Vec<[i64; 2]> = (0..g)
            .flat_map(|x| (0..g).map(move |y| [x as i64, y as i64]))
            .filter(|p| self.free(*p))
            .collect();
        self.positions = (0..self.cfg.n_agents).map(|_| free[rng.random_range(0..free.len())]).collect();
        self.t = 0;
        self.observe()
    }

    fn step(&mut self, actions: &[Action]) -> Result<StepOutcome> {
        if actions.len() != self.cfg.n_agents {
            return Err(AmiError::Protocol(format!(
                "expected {} actions, got {}",
                self.cfg.n_agents,
                actions.len()
            )));
        }
        let mut next = self.positions.clone();
        for (i, a) in actions.iter().enumerate() {
            let delta = match a.as_discrete() {
                Some(0) => [0, 0],
                Some(1) => [0, 1],
                Some(2) => [0, -1],
                Some(3) => [1, 0],
                Some(4) => [-1, 0],
                _ => return Err(AmiError::Protocol(format!("invalid gathergrid action {a:?} for agent {i}"))),
            };
            let cand = [next[i][0] + delta[0], next[i][1] + delta[1]];
            if self.free(cand) {
                next[i] = cand;
            }
        }
        self.positions = next;
        self.t += 1;
        let terminated = self.victims_colocated();
        Ok(StepOutcome {
            next: self.observe(),
            team_reward: team_reward(&self.positions),
            adversary_reward: dispersal_reward(&self.positions, self.adversary_slot),
            terminated,
            truncated: !terminated && self.t >= self.cfg.max_episode_len,
            clipped: false,
        })
    }

    fn adversary_slot(&self) -> Option<usize> {
        self.adversary_slot
    }

    fn set_adversary_slot(&mut self, slot: Option<usize>) -> Result<()> {
        check_slot(slot, self.cfg.n_agents)?;
        self.adversary_slot = slot;
        Ok(())
    }

    fn t(&self) -> usize {
        self.t
    }

    /// Observation of agent `i`: own normalized cell, then the normalized
    /// offsets of every other agent in slot order. State: all normalized cells.
    fn observe(&self) -> Observation {
        let s = self.scale();
        let state = self.positions.iter().flat_map(|p| [p[0] as f64 / s, p[1] as f64 / s]).collect();
        let obs = (0..self.positions.len())
            .map(|i| {
                let me = self.positions[i];
                let mut o = vec![me[0] as f64 / s, me[1] as f64 / s];
                for (j, p) in self.positions.iter().enumerate() {
                    if j != i {
                        o.push((p[0] - me[0]) as f64 / s);
                        o.push((p[1] - me[1]) as f64 / s);
                    }
                }
                o
            })
            .collect();
        Observation { state, obs }
    }
}
