//! Cooperative victim policies: decentralized actors and a centralized critic.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use rand_chacha::ChaCha8Rng;

use crate::env::PosgSpec;
use crate::error::{AmiError, Result};
use crate::nn::{Action, ActionDistribution, ActionSpace, NetConfig, ParameterSet, PolicyNet, ValueNet};

/// Anything that can choose an action for an agent slot from its observation.
pub trait SlotPolicy: Send + Sync {
    /// Action and its log-probability. Deterministic mode takes the mode.
    fn act(&self, slot: usize, obs: &[f64], rng: &mut ChaCha8Rng, deterministic: bool) -> Result<(Action, f64)>;
}

pub(crate) fn choose(dist: &ActionDistribution, rng: &mut ChaCha8Rng, deterministic: bool) -> (Action, f64) {
    let a = if deterministic { dist.mode() } else { dist.sample(rng) };
    let lp = dist.log_prob(&a);
    (a, lp)
}

pub const ACTOR_PREFIX: &str = "victim/actor";
pub const CRITIC_PREFIX: &str = "victim/critic/";

/// Victim actors (one shared actor with an agent-id one-hot, or one per
/// agent) and the centralized critic over the global state.
#[derive(Debug, Clone)]
pub struct VictimPolicySet {
    spec: PosgSpec,
    net: NetConfig,
    shared: bool,
    pub(crate) actors: Vec<PolicyNet>,
    pub(crate) actor_params: Vec<ParameterSet>,
    pub(crate) critic: ValueNet,
    pub(crate) critic_params: ParameterSet,
}

fn actor_prefix(shared: bool, i: usize) -> String {
    if shared {
        format!("{ACTOR_PREFIX}/")
    } else {
        format!("{ACTOR_PREFIX}{i}/")
    }
}

impl VictimPolicySet {
    pub fn init(spec: &PosgSpec, net: &NetConfig, shared: bool, rng: &mut ChaCha8Rng) -> Result<Self> {
        spec.validate()?;
        let n = spec.n_agents();
        let input = spec.obs_dim + if shared { n } else { 0 };
        let count = if shared { 1 } else { n };
        let mut actors = Vec::with_capacity(count);
        let mut actor_params = Vec::with_capacity(count);
        for i in 0..count {
            let mut p = ParameterSet::new();
            actors.push(PolicyNet::init(
                input,
                1,
                spec.action_space.clone(),
                net,
                &actor_prefix(shared, i),
                rng,
                &mut p,
            )?);
            actor_params.push(p);
        }
        let mut critic_params = ParameterSet::new();
        let critic = ValueNet::init(spec.state_dim, net, CRITIC_PREFIX, rng, &mut critic_params)?;
        Ok(Self {
            spec: spec.clone(),
            net: net.clone(),
            shared,
            actors,
            actor_params,
            critic,
            critic_params,
        })
    }

    /// Rebuilds from a combined parameter set (as written by [`Self::parameters`]).
    pub fn from_parameters(spec: &PosgSpec, net: &NetConfig, shared: bool, params: &ParameterSet) -> Result<Self> {
        let n = spec.n_agents();
        let input = spec.obs_dim + if shared { n } else { 0 };
        let count = if shared { 1 } else { n };
        let mut actors = Vec::with_capacity(count);
        let mut actor_params = Vec::with_capacity(count);
        for i in 0..count {
            let prefix = actor_prefix(shared, i);
            let p = params.filter_prefix(&prefix);
            actors.push(PolicyNet::bind(input, 1, spec.action_space.clone(), net, &prefix, &p)?);
            actor_params.push(p);
        }
        let critic_params = params.filter_prefix(CRITIC_PREFIX);
        let critic = ValueNet::bind(spec.state_dim, net, CRITIC_PREFIX, &critic_params)?;
        Ok(Self {
            spec: spec.clone(),
            net: net.clone(),
            shared,
            actors,
            actor_params,
            critic,
            critic_params,
        })
    }

    pub fn spec(&self) -> &PosgSpec {
        &self.spec
    }

    pub fn net_config(&self) -> &NetConfig {
        &self.net
    }

    pub fn shared(&self) -> bool {
        self.shared
    }

    pub fn n_agents(&self) -> usize {
        self.spec.n_agents()
    }

    pub fn space(&self) -> &ActionSpace {
        &self.spec.action_space
    }

    pub(crate) fn actor_index(&self, slot: usize) -> usize {
        if self.shared {
            0
        } else {
            slot
        }
    }

    pub(crate) fn actor_input(&self, slot: usize, obs: &[f64]) -> Vec<f64> {
        let mut x = obs.to_vec();
        if self.shared {
            let n = self.n_agents();
            x.extend((0..n).map(|j| if j == slot { 1.0 } else { 0.0 }));
        }
        x
    }

    pub fn policy(&self, slot: usize, obs: &[f64]) -> Result<ActionDistribution> {
        if slot >= self.n_agents() {
            return Err(AmiError::Dimension(format!("slot {slot} out of range")));
        }
        let k = self.actor_index(slot);
        let mut d = self.actors[k].distributions(&self.actor_params[k], &self.actor_input(slot, obs))?;
        Ok(d.remove(0))
    }

    pub fn value(&self, state: &[f64]) -> Result<f64> {
        self.critic.value(&self.critic_params, state)
    }

    /// All actor and critic blocks in one set.
    pub fn parameters(&self) -> ParameterSet {
        let mut all = ParameterSet::new();
        for p in &self.actor_params {
            all.extend(p.clone()).expect("actor blocks are disjoint");
        }
        all.extend(self.critic_params.clone()).expect("critic blocks are disjoint");
        all
    }

    pub fn checksum(&self) -> u64 {
        self.parameters().checksum()
    }

    pub fn freeze(self) -> FrozenVictims {
        FrozenVictims {
            inner: Arc::new(self),
            reads: Arc::new(AtomicUsize::new(0)),
        }
    }
}

impl SlotPolicy for VictimPolicySet {
    fn act(&self, slot: usize, obs: &[f64], rng: &mut ChaCha8Rng, deterministic: bool) -> Result<(Action, f64)> {
        Ok(choose(&self.policy(slot, obs)?, rng, deterministic))
    }
}

/// Immutable victims. Only action queries are free; any read of the
/// parameters goes through [`FrozenVictims::parameters`] and is counted so
/// that attack runs can assert they never looked inside.
#[derive(Debug, Clone)]
pub struct FrozenVictims {
    inner: Arc<VictimPolicySet>,
    reads: Arc<AtomicUsize>,
}

impl FrozenVictims {
    pub fn n_agents(&self) -> usize {
        self.inner.n_agents()
    }

    pub fn spec(&self) -> &PosgSpec {
        self.inner.spec()
    }

    pub fn space(&self) -> &ActionSpace {
        self.inner.space()
    }

    /// Integrity fingerprint of the parameters (not counted as a read).
    pub fn checksum(&self) -> u64 {
        self.inner.checksum()
    }

    /// Counted access to the parameter blocks.
    pub fn parameters(&self) -> ParameterSet {
        self.reads.fetch_add(1, Ordering::SeqCst);
        self.inner.parameters()
    }

    pub fn parameter_reads(&self) -> usize {
        self.reads.load(Ordering::SeqCst)
    }

    /// A trainable copy (for defenses). Counted as a read.
    pub fn thaw(&self) -> VictimPolicySet {
        self.reads.fetch_add(1, Ordering::SeqCst);
        (*self.inner).clone()
    }
}

impl SlotPolicy for FrozenVictims {
    fn act(&self, slot: usize, obs: &[f64], rng: &mut ChaCha8Rng, deterministic: bool) -> Result<(Action, f64)> {
        self.inner.act(slot, obs, rng, deterministic)
    }
}
