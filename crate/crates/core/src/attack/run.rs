use std::time::Instant;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{influence_term, variant_reward, AdversaryAgent, AttackConfig, AttackMethod, InfluencePieces};
use crate::env::{EnvConfig, PosgSpec, StepRecord};
use crate::error::{AmiError, Result};
use crate::harness::stats::summarize;
use crate::harness::{Seeder, Stream};
use crate::influence::{ami_influence_reward, kl_to_uniform, DistanceMetric, RunningNorm};
use crate::mappo::{collect_parallel, run_episode, Episode, FrozenVictims, RatioMode, SlotPolicy};
use crate::nn::{Action, ActionDistribution};
use crate::opponent::{transitions, OpponentModel};
use crate::tao::{TargetOracle, TaoEpisode, TaoStep};

/// Phases of one training iteration, in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Event {
    Rollout,
    FitOpponentModel,
    TaoCritic,
    TaoPolicy,
    ComputeReward,
    AdversaryCritic,
    AdversaryPolicy,
    RolledBack,
}

impl Event {
    pub const ITERATION: [Event; 7] = [
        Event::Rollout,
        Event::FitOpponentModel,
        Event::TaoCritic,
        Event::TaoPolicy,
        Event::ComputeReward,
        Event::AdversaryCritic,
        Event::AdversaryPolicy,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub iter: usize,
    pub env_steps: usize,
    /// Mean undiscounted adversary return per episode.
    pub adv_reward_mean: f64,
    pub adv_reward_ci95: f64,
    /// Mean raw influence term per step.
    pub influence_mean: f64,
    /// Opponent-model NLL on the fresh batch, before fitting it.
    pub nll_opp_model: f64,
}

/// Per-step reward bookkeeping of the latest iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardStep {
    pub episode: usize,
    pub t: usize,
    pub adversary_reward: f64,
    pub influence_raw: f64,
    pub influence_used: f64,
    pub shaped: f64,
}

/// One victim's target at one step of a recorded episode, next to the
/// action that victim actually took afterwards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetRow {
    pub iter: usize,
    pub t: usize,
    pub victim: usize,
    pub target_dist: ActionDistribution,
    pub target: Action,
    pub realized: Option<Action>,
}

/// Adversary training state. Victims are only ever queried for actions.
pub struct AttackRun {
    cfg: AttackConfig,
    env: EnvConfig,
    spec: PosgSpec,
    victims: FrozenVictims,
    seeder: Seeder,
    metric: DistanceMetric,
    pub adversary: AdversaryAgent,
    pub oracle: TargetOracle,
    pub opponent: OpponentModel,
    pub norm: RunningNorm,
    iter: usize,
    env_steps: usize,
    pub events: Vec<(usize, Event)>,
    pub metrics: Vec<MetricsRow>,
    /// Seconds per iteration.
    pub timing: Vec<f64>,
    /// Steps of the most recent iteration.
    pub last_rewards: Vec<RewardStep>,
    /// Targets of the first episode of every iteration.
    pub targets: Vec<TargetRow>,
    /// Smallest and largest per-victim distance seen so far.
    pub distance_range: Option<(f64, f64)>,
}

impl AttackRun {
    pub fn new(env: &EnvConfig, victims: FrozenVictims, cfg: AttackConfig, seeder: Seeder) -> Result<Self> {
        cfg.validate(env)?;
        let env = cfg.train.env_for(env);
        let spec = env.build()?.spec().clone();
        if victims.n_agents() != spec.n_agents() || victims.space() != &spec.action_space {
            return Err(AmiError::Dimension("victims do not match the environment".into()));
        }
        let space = spec.action_space.clone();
        let metric = cfg.metric_for(&space)?;
        let net = cfg.train.net_config();
        let adversary = AdversaryAgent::new(
            spec.obs_dim,
            spec.state_dim,
            space.clone(),
            &cfg.train,
            &mut seeder.rng(Stream::AdversaryInit, 0),
        )?;
        let oracle = TargetOracle::new(
            spec.state_dim,
            spec.n_victims,
            space.clone(),
            &net,
            cfg.tao_lr.unwrap_or(cfg.train.lr),
            cfg.tao_critic_lr.unwrap_or(cfg.train.critic_lr()),
            &mut seeder.rng(Stream::TaoInit, 0),
        )?;
        let opponent = OpponentModel::new(
            spec.state_dim,
            spec.n_victims,
            space,
            &net,
            cfg.opponent_config(),
            &mut seeder.rng(Stream::OpponentInit, 0),
        )?;
        Ok(Self {
            cfg,
            env,
            spec,
            victims,
            seeder,
            metric,
            adversary,
            oracle,
            opponent,
            norm: RunningNorm::default(),
            iter: 0,
            env_steps: 0,
            events: Vec::new(),
            metrics: Vec::new(),
            timing: Vec::new(),
            last_rewards: Vec::new(),
            targets: Vec::new(),
            distance_range: None,
        })
    }

    pub fn config(&self) -> &AttackConfig {
        &self.cfg
    }

    pub fn env(&self) -> &EnvConfig {
        &self.env
    }

    pub fn metric(&self) -> DistanceMetric {
        self.metric
    }

    pub fn iterations_done(&self) -> usize {
        self.iter
    }

    /// One full iteration. On failure all learned state is restored to what
    /// it was before the call and the error is returned.
    pub fn iteration(&mut self) -> Result<&MetricsRow> {
        let start = Instant::now();
        let snapshot = (
            self.adversary.clone(),
            self.oracle.clone(),
            self.opponent.clone(),
            self.norm.clone(),
            self.distance_range,
            self.events.len(),
            self.targets.len(),
        );
        match self.iteration_inner() {
            Ok(row) => {
                self.metrics.push(row);
                self.timing.push(start.elapsed().as_secs_f64());
                self.iter += 1;
                Ok(self.metrics.last().expect("just pushed"))
            }
            Err(e) => {
                let (adv, oracle, opp, norm, range, n_events, n_targets) = snapshot;
                self.adversary = adv;
                self.oracle = oracle;
                self.opponent = opp;
                self.norm = norm;
                self.distance_range = range;
                self.events.truncate(n_events);
                self.targets.truncate(n_targets);
                self.events.push((self.iter, Event::RolledBack));
                Err(match e {
                    AmiError::Divergence(m) => AmiError::Divergence(format!("attack iteration {}: {m}", self.iter)),
                    other => other,
                })
            }
        }
    }

    fn log(&mut self, e: Event) {
        self.events.push((self.iter, e));
    }

    fn iteration_inner(&mut self) -> Result<MetricsRow> {
        let iter = self.iter;
        let cfg = self.cfg.clone();
        let batch = self.rollout()?;
        self.log(Event::Rollout);
        let steps: usize = batch.iter().map(Episode::len).sum();

        let data = transitions(&batch)?;
        let fit = self.opponent.fit(&data, &mut self.seeder.rng(Stream::OpponentMinibatch, iter as u64))?;
        self.log(Event::FitOpponentModel);

        let tao_batch = self.tao_batch(&batch)?;
        let mut rng = self.seeder.rng(Stream::TaoMinibatch, iter as u64);
        let tao_adv = self.oracle.advantages(&tao_batch, cfg.train.gamma, cfg.train.gae_lambda)?;
        self.oracle.update_critic(
            &tao_batch,
            &tao_adv,
            cfg.train.ppo_epoch,
            cfg.train.mini_batch_num,
            cfg.train.huber(),
            cfg.train.max_grad_norm,
            &mut rng,
        )?;
        self.log(Event::TaoCritic);
        self.oracle
            .update_policy(&tao_batch, &tao_adv, &cfg.train.ppo_settings(RatioMode::MeanOfHeads), &mut rng)?;
        self.log(Event::TaoPolicy);

        let shaped = self.shaped_rewards(&batch, &tao_batch)?;
        self.log(Event::ComputeReward);

        let mut rng = self.seeder.rng(Stream::AdversaryMinibatch, iter as u64);
        let adv = self.adversary.update_critic(&batch, &shaped, &cfg.train, &mut rng)?;
        self.log(Event::AdversaryCritic);
        self.adversary
            .update_policy(&batch, &adv, &cfg.train.ppo_settings(RatioMode::Joint), &mut rng)?;
        self.log(Event::AdversaryPolicy);

        self.env_steps += steps;
        let returns: Vec<f64> = batch.iter().map(Episode::adversary_return).collect();
        let s = summarize(&returns);
        let influence_mean = if self.last_rewards.is_empty() {
            0.0
        } else {
            self.last_rewards.iter().map(|r| r.influence_raw).sum::<f64>() / self.last_rewards.len() as f64
        };
        Ok(MetricsRow {
            iter,
            env_steps: self.env_steps,
            adv_reward_mean: s.mean,
            adv_reward_ci95: s.ci95,
            influence_mean,
            nll_opp_model: fit.nll_before,
        })
    }

    fn rollout(&self) -> Result<Vec<Episode>> {
        let slot = self.cfg.adversary_slot;
        let env = &self.env;
        let seeder = &self.seeder;
        let victims = &self.victims;
        let adversary = &self.adversary;
        collect_parallel(self.cfg.train.parallel_envs, self.iter, |e| {
            let mut env_i = env.build()?;
            env_i.set_adversary_slot(Some(slot))?;
            let mut vr = seeder.rng(Stream::VictimAct, e);
            let mut ar = seeder.rng(Stream::AdversaryAct, e);
            run_episode(env_i.as_mut(), seeder.derive(Stream::EnvReset, e), &mut |s, o| {
                if s == slot {
                    adversary.act(s, &o.obs[s], &mut ar, false)
                } else {
                    victims.act(s, &o.obs[s], &mut vr, false)
                }
            })
        })
    }

    /// Draws targets for every step and pairs them with the adversary reward.
    fn tao_batch(&mut self, batch: &[Episode]) -> Result<Vec<TaoEpisode>> {
        let mut rng = self.seeder.rng(Stream::TaoSample, self.iter as u64);
        let scale = self.cfg.train.reward_scale;
        let mut out = Vec::with_capacity(batch.len());
        for (k, ep) in batch.iter().enumerate() {
            let mut steps = Vec::with_capacity(ep.len());
            for r in &ep.records {
                let input = self.oracle_input(r)?;
                let dists = if k == 0 { Some(self.oracle.distributions(&input)?) } else { None };
                let draw = self.oracle.sample_targets(&input, &mut rng, false)?;
                if let Some(dists) = dists {
                    let realized = ep.records.get(r.t + 1).map(|n| n.victim_actions());
                    for (v, (d, a)) in dists.into_iter().zip(&draw.targets).enumerate() {
                        self.targets.push(TargetRow {
                            iter: self.iter,
                            t: r.t,
                            victim: v,
                            target_dist: d,
                            target: a.clone(),
                            realized: realized.as_ref().map(|x| x[v].clone()),
                        });
                    }
                }
                steps.push(TaoStep {
                    input,
                    draw,
                    reward: r.adversary_reward * scale,
                });
            }
            let bootstrap = match (ep.terminated, ep.records.last()) {
                (false, Some(last)) => {
                    let victims: Vec<Action> = last.victim_actions().into_iter().cloned().collect();
                    let adv = last.adversary_action().ok_or_else(|| AmiError::Integrity("missing adversary".into()))?;
                    Some(self.oracle.input(&ep.last.state, &victims, adv)?)
                }
                _ => None,
            };
            out.push(TaoEpisode { steps, bootstrap });
        }
        Ok(out)
    }

    fn oracle_input(&self, r: &StepRecord) -> Result<Vec<f64>> {
        let victims: Vec<Action> = r.victim_actions().into_iter().cloned().collect();
        let adv = r.adversary_action().ok_or_else(|| AmiError::Integrity("missing adversary".into()))?;
        self.oracle.input(&r.state, &victims, adv)
    }

    /// Influence pieces at one step. Only the step's own record and its
    /// targets enter; later records are never looked at.
    pub(crate) fn influence_at(
        &self,
        record: &StepRecord,
        targets: &[Action],
        rng: &mut ChaCha8Rng,
    ) -> Result<(InfluencePieces, Vec<f64>)> {
        let slot = record
            .adversary_slot
            .ok_or_else(|| AmiError::Integrity("missing adversary".into()))?;
        let victims: Vec<Action> = record.victim_actions().into_iter().cloned().collect();
        let adv_dist = self.adversary.policy(&record.obs[slot])?;
        let cf = self.opponent.counterfactual(&record.state, &victims, &adv_dist, rng)?;
        if cf.expected.len() != targets.len() {
            return Err(AmiError::Integrity("influence pieces do not match the victims".into()));
        }
        let majority = -cf.conditional_entropy.iter().sum::<f64>();
        let minority = cf.expected.iter().map(ActionDistribution::entropy).sum();
        let untargeted = -cf
            .expected
            .iter()
            .map(|d| kl_to_uniform(d, &self.spec.action_space))
            .sum::<Result<f64>>()?;
        let rec = ami_influence_reward(cf.expected, targets.to_vec(), self.metric)?;
        let pieces = InfluencePieces {
            targeted: rec.total,
            majority,
            minority,
            untargeted,
        };
        Ok((pieces, rec.distances))
    }

    fn shaped_rewards(&mut self, batch: &[Episode], tao: &[TaoEpisode]) -> Result<Vec<Vec<f64>>> {
        let method = self.cfg.method;
        let lambda = self.cfg.effective_lambda();
        let scale = self.cfg.train.reward_scale;
        let mut rng = self.seeder.rng(Stream::Counterfactual, self.iter as u64);
        let mut raw = Vec::with_capacity(batch.len());
        let mut range = self.distance_range;
        for (ep, tep) in batch.iter().zip(tao) {
            let mut row = Vec::with_capacity(ep.len());
            for (r, step) in ep.records.iter().zip(&tep.steps) {
                if step.reward != r.adversary_reward * scale {
                    return Err(AmiError::Integrity("oracle and adversary rewards diverged".into()));
                }
                let (pieces, distances) = self.influence_at(r, &step.draw.targets, &mut rng)?;
                for d in distances {
                    let (lo, hi) = range.unwrap_or((d, d));
                    range = Some((lo.min(d), hi.max(d)));
                }
                let i = influence_term(method, &pieces);
                if !i.is_finite() {
                    return Err(AmiError::Divergence(format!("non-finite influence at t={}", r.t)));
                }
                row.push(i);
            }
            raw.push(row);
        }
        self.distance_range = range;
        if self.cfg.normalize_influence {
            self.norm.update(&raw.concat());
        }
        let mut shaped = Vec::with_capacity(batch.len());
        self.last_rewards.clear();
        for (k, (ep, row)) in batch.iter().zip(&raw).enumerate() {
            let mut out = Vec::with_capacity(ep.len());
            for (r, &i) in ep.records.iter().zip(row) {
                let used = if self.cfg.normalize_influence { self.norm.normalize(i) } else { i };
                let s = variant_reward(method, r.adversary_reward, lambda, used);
                let residual = s - r.adversary_reward - lambda * used;
                if residual.abs() > 1e-12 * (1.0 + s.abs()) && method != AttackMethod::AdvPolicy {
                    return Err(AmiError::Integrity(format!("reward composition off by {residual}")));
                }
                self.last_rewards.push(RewardStep {
                    episode: k,
                    t: r.t,
                    adversary_reward: r.adversary_reward,
                    influence_raw: i,
                    influence_used: used,
                    shaped: s,
                });
                out.push(s);
            }
            shaped.push(out);
        }
        Ok(shaped)
    }
}

/// Result of a complete attack run.
pub struct AttackOutcome {
    pub run: AttackRun,
    pub victim_checksum: u64,
    pub victim_parameter_reads: usize,
}

/// Trains an adversary against frozen victims for `cfg.train.iterations`
/// and checks afterwards that the victims were neither modified nor read.
pub fn run_attack(env: &EnvConfig, victims: &FrozenVictims, cfg: &AttackConfig, seeder: &Seeder) -> Result<AttackOutcome> {
    let checksum = victims.checksum();
    let reads = victims.parameter_reads();
    let mut run = AttackRun::new(env, victims.clone(), cfg.clone(), *seeder)?;
    for _ in 0..cfg.train.iterations {
        run.iteration()?;
        log::debug!(
            "attack {} iter {}: adv reward {:.4}",
            cfg.method.cli_name(),
            run.iterations_done(),
            run.metrics.last().map(|m| m.adv_reward_mean).unwrap_or(f64::NAN)
        );
    }
    if victims.checksum() != checksum {
        return Err(AmiError::Integrity("victim parameters changed during the attack".into()));
    }
    let read_now = victims.parameter_reads() - reads;
    if read_now != 0 {
        return Err(AmiError::Integrity(format!("attack read victim parameters {read_now} times")));
    }
    Ok(AttackOutcome {
        run,
        victim_checksum: checksum,
        victim_parameter_reads: read_now,
    })
}
