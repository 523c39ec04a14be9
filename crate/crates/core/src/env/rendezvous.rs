//! Differential-drive swarm rendezvous in a walled square arena.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_slot, MultiAgentEnv, Observation, PosgSpec, StepOutcome};
use crate::error::{AmiError, Result};
use crate::nn::{Action, ActionSpace};

/// Weight of the control penalty in the team reward.
pub const CONTROL_COST: f64 = 0.001;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RendezvousConfig {
    pub n_agents: usize,
    /// Side length of the square arena in meters.
    pub arena: f64,
    pub wheel_radius: f64,
    pub axle_length: f64,
    pub dt: f64,
    /// Wheel angular speed bound in rad/s; policy actions in `[-1, 1]` are
    /// scaled by this.
    pub max_wheel_speed: f64,
    pub max_episode_len: usize,
    pub gamma: f64,
}

impl Default for RendezvousConfig {
    fn default() -> Self {
        Self {
            n_agents: 5,
            arena: 2.0,
            wheel_radius: 0.02,
            axle_length: 0.05,
            dt: 0.5,
            max_wheel_speed: 6.0,
            max_episode_len: 200,
            gamma: 0.99,
        }
    }
}

/// Wrap an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    if a > -PI && a <= PI {
        return a;
    }
    let mut x = (a + PI).rem_euclid(2.0 * PI) - PI;
    if x <= -PI {
        x += 2.0 * PI;
    }
    x
}

/// Robot poses plus the derived pairwise matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct SwarmState {
    pub positions: Vec<[f64; 2]>,
    pub headings: Vec<f64>,
    /// `dist[i][j] = ||p_i - p_j||`
    pub dist: Vec<Vec<f64>>,
    /// `angle[i][j]`: bearing of `j` as seen from `i`, relative to `i`'s heading.
    pub angle: Vec<Vec<f64>>,
}

impl SwarmState {
    pub fn new(positions: Vec<[f64; 2]>, headings: Vec<f64>) -> Self {
        let mut s = Self {
            positions,
            headings,
            dist: Vec::new(),
            angle: Vec::new(),
        };
        s.recompute();
        s
    }

    pub fn n(&self) -> usize {
        self.positions.len()
    }

    pub fn recompute(&mut self) {
        let n = self.n();
        self.dist = vec![vec![0.0; n]; n];
        self.angle = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let dx = self.positions[j][0] - self.positions[i][0];
                let dy = self.positions[j][1] - self.positions[i][1];
                self.dist[i][j] = dx.hypot(dy);
                self.angle[i][j] = wrap_angle(dy.atan2(dx) - self.headings[i]);
            }
        }
    }

    /// Sum of pairwise distances over unordered pairs.
    pub fn pairwise_sum(&self) -> f64 {
        let n = self.n();
        (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).map(|(i, j)| self.dist[i][j]).sum()
    }

    pub fn mean_pairwise(&self) -> f64 {
        let n = self.n();
        let pairs = n * (n - 1) / 2;
        if pairs == 0 {
            0.0
        } else {
            self.pairwise_sum() / pairs as f64
        }
    }
}

/// Kinematic constants for [`rendezvous_step`].
#[derive(Debug, Clone, Copy)]
pub struct Kinematics {
    pub wheel_radius: f64,
    pub axle_length: f64,
    pub arena: f64,
}

/// Advances every robot by one Euler step of differential-drive kinematics
/// given `(left, right)` wheel speeds in rad/s, then clips to the arena.
pub fn rendezvous_step(state: &SwarmState, wheels: &[[f64; 2]], dt: f64, k: Kinematics) -> SwarmState {
    let mut positions = state.positions.clone();
    let mut headings = state.headings.clone();
    for (i, [wl, wr]) in wheels.iter().enumerate() {
        let v = k.wheel_radius * (wl + wr) / 2.0;
        let omega = k.wheel_radius * (wr - wl) / k.axle_length;
        let h = headings[i];
        positions[i][0] = (positions[i][0] + v * h.cos() * dt).clamp(0.0, k.arena);
        positions[i][1] = (positions[i][1] + v * h.sin() * dt).clamp(0.0, k.arena);
        headings[i] = wrap_angle(h + omega * dt);
    }
    SwarmState::new(positions, headings)
}

/// `(r, r_d, r_c)` with `r_d = -sum_{i<j} ||p_i - p_j||`, `r_c = sum_i ||a_i||`
/// and `r = r_d - 0.001 r_c`.
pub fn rendezvous_reward(state: &SwarmState, wheels: &[[f64; 2]]) -> (f64, f64, f64) {
    let r_d = -state.pairwise_sum();
    let r_c: f64 = wheels.iter().map(|[l, r]| l.hypot(*r)).sum();
    (r_d - CONTROL_COST * r_c, r_d, r_c)
}

/// Local observation of robot `i`: distances to the others, then
/// `sin theta`, `cos theta`, `sin phi`, `cos phi` for each other robot, where
/// `theta = angle[i][j]` and `phi = angle[j][i]`.
pub fn rendezvous_observe(state: &SwarmState, i: usize) -> Vec<f64> {
    let others: Vec<usize> = (0..state.n()).filter(|&j| j != i).collect();
    let mut o = Vec::with_capacity(others.len() * 5);
    o.extend(others.iter().map(|&j| state.dist[i][j]));
    o.extend(others.iter().map(|&j| state.angle[i][j].sin()));
    o.extend(others.iter().map(|&j| state.angle[i][j].cos()));
    o.extend(others.iter().map(|&j| state.angle[j][i].sin()));
    o.extend(others.iter().map(|&j| state.angle[j][i].cos()));
    o
}

/// Global state: upper-triangular distances, then `(sin, cos)` of every
/// off-diagonal angle entry in row-major order.
pub fn rendezvous_global_state(state: &SwarmState) -> Vec<f64> {
    let n = state.n();
    let mut s = Vec::with_capacity(n * (n - 1) / 2 + 2 * n * (n - 1));
    for i in 0..n {
        for j in (i + 1)..n {
            s.push(state.dist[i][j]);
        }
    }
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s.push(state.angle[i][j].sin());
                s.push(state.angle[i][j].cos());
            }
        }
    }
    s
}

pub struct Rendezvous {
    cfg: RendezvousConfig,
    spec: PosgSpec,
    state: SwarmState,
    t: usize,
    adversary_slot: Option<usize>,
}

impl Rendezvous {
    pub fn new(cfg: RendezvousConfig) -> Result<Self> {
        if cfg.n_agents < 2 {
            return Err(AmiError::Config("rendezvous needs at least 2 robots".into()));
        }
        if !(cfg.arena > 0.0 && cfg.dt > 0.0 && cfg.wheel_radius > 0.0 && cfg.axle_length > 0.0) {
            return Err(AmiError::Config("rendezvous constants must be positive".into()));
        }
        let n = cfg.n_agents;
        let spec = PosgSpec {
            n_victims: n - 1,
            n_adversaries: 1,
            state_dim: n * (n - 1) / 2 + 2 * n * (n - 1),
            obs_dim: 5 * (n - 1),
            action_space: ActionSpace::Continuous {
                dim: 2,
                low: -1.0,
                high: 1.0,
            },
            max_episode_len: cfg.max_episode_len,
            gamma: cfg.gamma,
        };
        spec.validate()?;
        let state = SwarmState::new(vec![[0.0, 0.0]; n], vec![0.0; n]);
        Ok(Self {
            cfg,
            spec,
            state,
            t: 0,
            adversary_slot: None,
        })
    }

    pub fn swarm(&self) -> &SwarmState {
        &self.state
    }

    pub fn kinematics(&self) -> Kinematics {
        Kinematics {
            wheel_radius: self.cfg.wheel_radius,
            axle_length: self.cfg.axle_length,
            arena: self.cfg.arena,
        }
    }

    /// Replaces the current poses (used by tests and within-subject replays).
    pub fn set_swarm(&mut self, state: SwarmState) {
        self.state = state;
    }
}

impl MultiAgentEnv for Rendezvous {
    fn spec(&self) -> &PosgSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Observation {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.cfg.n_agents;
        let positions = (0..n)
            .map(|_| [rng.random_range(0.0..self.cfg.arena), rng.random_range(0.0..self.cfg.arena)])
            .collect();
        let headings = (0..n).map(|_| rng.random_range(-PI..PI)).collect();
        self.state = SwarmState::new(positions, headings);
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
        let mut clipped = false;
        let mut wheels = Vec::with_capacity(actions.len());
        for a in actions {
            let v = a
                .as_continuous()
                .filter(|v| v.len() == 2)
                .ok_or_else(|| AmiError::Protocol("rendezvous expects 2-d continuous actions".into()))?;
            let mut w = [0.0; 2];
            for k in 0..2 {
                let c = if v[k].is_nan() { 0.0 } else { v[k].clamp(-1.0, 1.0) };
                clipped |= c != v[k];
                w[k] = c * self.cfg.max_wheel_speed;
            }
            wheels.push(w);
        }
        self.state = rendezvous_step(&self.state, &wheels, self.cfg.dt, self.kinematics());
        self.t += 1;
        let (r, r_d, _) = rendezvous_reward(&self.state, &wheels);
        Ok(StepOutcome {
            next: self.observe(),
            team_reward: r,
            adversary_reward: -r_d,
            terminated: false,
            truncated: self.t >= self.cfg.max_episode_len,
            clipped,
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

    fn observe(&self) -> Observation {
        Observation {
            state: rendezvous_global_state(&self.state),
            obs: (0..self.cfg.n_agents).map(|i| rendezvous_observe(&self.state, i)).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const K: Kinematics = Kinematics {
        wheel_radius: 0.02,
        axle_length: 0.05,
        arena: 2.0,
    };

    #[test]
    fn zero_wheels_do_not_move() {
        let s = SwarmState::new(vec![[1.0, 1.0]], vec![0.3]);
        let n = rendezvous_step(&s, &[[0.0, 0.0]], 0.1, K);
        assert_eq!(n.positions, s.positions);
        assert_eq!(n.headings, s.headings);
    }

    #[test]
    fn equal_wheels_translate_along_heading() {
        let s = SwarmState::new(vec![[1.0, 1.0]], vec![0.0]);
        let n = rendezvous_step(&s, &[[3.0, 3.0]], 0.1, K);
        assert!((n.positions[0][0] - (1.0 + 0.02 * 3.0 * 0.1)).abs() < 1e-15);
        assert_eq!(n.positions[0][1], 1.0);
    }

    #[test]
    fn opposite_wheels_spin_in_place() {
        let s = SwarmState::new(vec![[1.0, 1.0]], vec![0.0]);
        let n = rendezvous_step(&s, &[[-2.0, 2.0]], 0.1, K);
        assert_eq!(n.positions[0], [1.0, 1.0]);
        // r_w * 2 w_r * dt / L
        assert!((n.headings[0] - 0.02 * 4.0 * 0.1 / 0.05).abs() < 1e-12);
    }

    #[test]
    fn walls_clip_positions() {
        let s = SwarmState::new(vec![[1.999, 0.5]], vec![0.0]);
        let n = rendezvous_step(&s, &[[6.0, 6.0]], 1.0, K);
        assert_eq!(n.positions[0][0], 2.0);
        assert_eq!(n.headings[0], 0.0);
    }

    #[test]
    fn reward_examples() {
        let s = SwarmState::new(vec![[0.5, 0.5]; 3], vec![0.0; 3]);
        assert_eq!(rendezvous_reward(&s, &[[0.0, 0.0]; 3]).0, 0.0);
        let s = SwarmState::new(vec![[0.0, 0.0], [1.0, 0.0]], vec![0.0; 2]);
        assert!((rendezvous_reward(&s, &[[0.0, 0.0]; 2]).0 + 1.0).abs() < 1e-15);
        let h = 3f64.sqrt() / 2.0;
        let s = SwarmState::new(vec![[0.0, 0.0], [1.0, 0.0], [0.5, h]], vec![0.0; 3]);
        assert!((rendezvous_reward(&s, &[[0.0, 0.0]; 3]).1 + 3.0).abs() < 1e-12);
        let (r, r_d, r_c) = rendezvous_reward(&s, &[[3.0, 4.0], [0.0, 0.0], [0.0, 0.0]]);
        assert_eq!(r_c, 5.0);
        assert!((r - (r_d - 0.005)).abs() < 1e-15);
    }

    #[test]
    fn observation_geometry() {
        let s = SwarmState::new(vec![[1.0, 1.0], [1.0, 1.0]], vec![0.0, 0.0]);
        assert_eq!(rendezvous_observe(&s, 0)[0], 0.0);
        // robot 1 straight ahead of robot 0
        let s = SwarmState::new(vec![[0.5, 1.0], [1.5, 1.0]], vec![0.0, PI / 2.0]);
        let o = rendezvous_observe(&s, 0);
        assert_eq!(o.len(), 5);
        assert!((o[0] - 1.0).abs() < 1e-15);
        assert!(o[1].abs() < 1e-15 && (o[2] - 1.0).abs() < 1e-15);
        // robot 0 is behind robot 1's left side: bearing pi - pi/2 = pi/2
        assert!((o[3] - 1.0).abs() < 1e-12 && o[4].abs() < 1e-12);
    }

    #[test]
    fn reset_is_seeded_and_inside_arena() {
        let mut env = Rendezvous::new(RendezvousConfig::default()).unwrap();
        let a = env.reset(7);
        let b = env.reset(7);
        assert_eq!(a, b);
        for seed in 0..50 {
            env.reset(seed);
            assert!(env.swarm().positions.iter().all(|p| (0.0..=2.0).contains(&p[0]) && (0.0..=2.0).contains(&p[1])));
        }
    }

    #[test]
    fn out_of_box_actions_are_clipped_and_flagged() {
        let mut env = Rendezvous::new(RendezvousConfig::default()).unwrap();
        env.reset(1);
        let acts = vec![Action::Continuous(vec![0.5, 0.5]); 5];
        assert!(!env.step(&acts).unwrap().clipped);
        let mut acts = acts;
        acts[2] = Action::Continuous(vec![3.0, -0.2]);
        assert!(env.step(&acts).unwrap().clipped);
        assert!(env.step(&[Action::Discrete(0)]).is_err());
    }
}
