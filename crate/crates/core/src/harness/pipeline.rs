//! End-to-end runs. Each writes a directory of artifacts and a manifest
//! from which the run can be replayed and checked.
//!
//! Seed fan-out from the run seed: victims use child 0, attacks child 1,
//! adversarial training child 2, detection child 3, re-attack seeds
//! child 4 and evaluation child 9.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::output::{write_csv, write_json, Command, DefendMode, RunManifest};
use super::stats::{summarize, Summary};
use super::{Seeder, Stream};
use crate::attack::{evaluate_attack, run_attack, AdversaryAgent, AttackConfig, AttackMethod, EvalReport, RandomPolicy};
use crate::defense::{
    auc, collect_detection_episodes, detection_curve, dual_adversarial_train, label_shuffle_control, rerun_attack_protocols, shuffle_labels,
    train_detector, write_dataset, DetectionEpisode, Detector, Protocol, Signal,
};
use crate::env::EnvConfig;
use crate::error::{AmiError, Result};
use crate::influence::DistanceMetric;
use crate::mappo::{train_victims, FrozenVictims, SlotPolicy, VictimPolicySet};
use crate::nn::checkpoint;

pub const VICTIMS_CKPT: &str = "victims.ckpt";

/// One evaluation line of an attack run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub policy: String,
    pub episodes: usize,
    pub adv_reward_mean: f64,
    pub adv_reward_ci95: f64,
    pub team_reward_mean: f64,
    pub team_reward_ci95: f64,
}

impl EvalRow {
    fn new(policy: &str, r: &EvalReport) -> Self {
        Self {
            policy: policy.to_string(),
            episodes: r.adversary.n,
            adv_reward_mean: r.adversary.mean,
            adv_reward_ci95: r.adversary.ci95,
            team_reward_mean: r.team.mean,
            team_reward_ci95: r.team.ci95,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub iter: usize,
    pub wallclock_s: f64,
}

/// Flat form of a target transcript line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptRow {
    pub iter: usize,
    pub t: usize,
    pub victim: usize,
    pub target: String,
    pub target_dist: String,
    pub realized: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSummary {
    pub method: AttackMethod,
    pub lambda: f64,
    pub metric: DistanceMetric,
    pub seed: u64,
    pub adversary_eval: Summary,
    pub team_eval: Summary,
    pub random_adversary_eval: Summary,
    pub random_team_eval: Summary,
    pub no_attack_adversary_eval: Summary,
    pub no_attack_team_eval: Summary,
    pub adversary_returns: Vec<f64>,
    pub distance_min: Option<f64>,
    pub distance_max: Option<f64>,
    pub victim_parameter_reads: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtRow {
    pub victims: String,
    pub adv_reward_mean: f64,
    pub adv_reward_ci95: f64,
    pub team_reward_under_attack: f64,
    pub team_reward_no_attack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionSummary {
    pub signal: Signal,
    /// Accuracy and AUC of each held-out episode's first and final
    /// prediction.
    pub accuracy_first: f64,
    pub accuracy_final: f64,
    pub auc_final: Option<f64>,
    pub train_accuracy_final: f64,
    /// Control trained and evaluated with labels shuffled within each class.
    pub shuffle_auc_final: Option<f64>,
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| AmiError::path(dir, e))
}

/// Victim settings determine the environment the run is built on.
pub fn run_env(cfg: &ExperimentConfig) -> EnvConfig {
    cfg.victims.env_for(&cfg.env)
}

pub fn load_victims(cfg: &ExperimentConfig, path: &Path) -> Result<FrozenVictims> {
    let spec = run_env(cfg).build()?.spec().clone();
    let params = checkpoint::load(path)?;
    Ok(VictimPolicySet::from_parameters(&spec, &cfg.victims.net_config(), cfg.victims.share_actor_params, &params)?.freeze())
}

pub fn load_adversary(cfg: &ExperimentConfig, path: &Path) -> Result<AdversaryAgent> {
    let spec = run_env(cfg).build()?.spec().clone();
    let params = checkpoint::load(path)?;
    let train = &cfg.attack.train;
    AdversaryAgent::from_parameters(spec.obs_dim, spec.state_dim, spec.action_space, &train.net_config(), &params, train)
}

fn stage_victims(dir: &Path, cfg: &ExperimentConfig, seed: u64, given: Option<&Path>, m: &mut RunManifest) -> Result<FrozenVictims> {
    if let Some(p) = given {
        m.add_input(p)?;
        return load_victims(cfg, p);
    }
    let (v, curve) = train_victims(&cfg.env, &cfg.victims, &Seeder::new(seed).child(0))?;
    checkpoint::save(dir.join(VICTIMS_CKPT), &v.parameters())?;
    m.add_checkpoint(dir, VICTIMS_CKPT)?;
    write_csv(dir.join("learning_curve.csv"), &curve)?;
    m.add_metric(dir, "learning_curve.csv")?;
    Ok(v.freeze())
}

/// Trains and evaluates one adversary. Files are written with `prefix`.
fn stage_attack(
    dir: &Path,
    cfg: &ExperimentConfig,
    attack: &AttackConfig,
    seed: u64,
    victims: &FrozenVictims,
    m: &mut RunManifest,
    prefix: &str,
) -> Result<(AdversaryAgent, AttackSummary)> {
    let master = Seeder::new(seed);
    let out = run_attack(&cfg.env, victims, attack, &master.child(1))?;
    let run = &out.run;
    let name = |s: &str| format!("{prefix}{s}");

    write_csv(dir.join(name("metrics.csv")), &run.metrics)?;
    m.add_metric(dir, &name("metrics.csv"))?;
    let timing: Vec<TimingRow> = run
        .timing
        .iter()
        .enumerate()
        .map(|(iter, s)| TimingRow { iter, wallclock_s: *s })
        .collect();
    write_csv(dir.join(name("timing.csv")), &timing)?;
    m.unhashed.push(name("timing.csv"));
    let transcript: Vec<TranscriptRow> = run
        .targets
        .iter()
        .map(|r| {
            Ok(TranscriptRow {
                iter: r.iter,
                t: r.t,
                victim: r.victim,
                target: serde_json::to_string(&r.target)?,
                target_dist: serde_json::to_string(&r.target_dist)?,
                realized: match &r.realized {
                    Some(a) => serde_json::to_string(a)?,
                    None => String::new(),
                },
            })
        })
        .collect::<Result<_>>()?;
    write_csv(dir.join(name("targets.csv")), &transcript)?;
    m.add_metric(dir, &name("targets.csv"))?;
    checkpoint::save(dir.join(name("adversary.ckpt")), &run.adversary.parameters())?;
    m.add_checkpoint(dir, &name("adversary.ckpt"))?;

    let env = attack.train.env_for(&cfg.env);
    let slot = attack.adversary_slot;
    let ev = master.child(9);
    let trained = evaluate_attack(Some(&run.adversary), victims, &env, slot, cfg.eval_episodes, &ev)?;
    let random = RandomPolicy {
        space: victims.space().clone(),
    };
    let rnd = evaluate_attack(Some(&random), victims, &env, slot, cfg.eval_episodes, &ev)?;
    let none = evaluate_attack(None, victims, &env, slot, cfg.eval_episodes, &ev)?;
    let rows = [
        EvalRow::new("trained", &trained),
        EvalRow::new("random", &rnd),
        EvalRow::new("no-attack", &none),
    ];
    write_csv(dir.join(name("eval.csv")), &rows)?;
    m.add_metric(dir, &name("eval.csv"))?;

    let summary = AttackSummary {
        method: attack.method,
        lambda: attack.lambda,
        metric: run.metric(),
        seed,
        adversary_eval: trained.adversary,
        team_eval: trained.team,
        random_adversary_eval: rnd.adversary,
        random_team_eval: rnd.team,
        no_attack_adversary_eval: none.adversary,
        no_attack_team_eval: none.team,
        adversary_returns: trained.adversary_returns,
        distance_min: run.distance_range.map(|r| r.0),
        distance_max: run.distance_range.map(|r| r.1),
        victim_parameter_reads: out.victim_parameter_reads,
    };
    write_json(dir.join(name("summary.json")), &summary)?;
    m.add_metric(dir, &name("summary.json"))?;
    Ok((out.run.adversary, summary))
}

/// Runs `command` into `out` and writes its manifest.
pub fn run_command(command: &Command, cfg: &ExperimentConfig, seed: u64, out: &Path) -> Result<RunManifest> {
    cfg.validate()?;
    ensure_dir(out)?;
    let spec = run_env(cfg).build()?.spec().clone();
    let mut m = RunManifest::new(command.clone(), seed, cfg.clone(), spec);
    match command {
        Command::TrainVictims => {
            stage_victims(out, cfg, seed, None, &mut m)?;
        }
        Command::Attack { victims } => {
            let v = stage_victims(out, cfg, seed, victims.as_deref(), &mut m)?;
            stage_attack(out, cfg, &cfg.attack, seed, &v, &mut m, "")?;
        }
        Command::Defend { mode, victims, adversary } => defend(out, cfg, seed, *mode, victims.as_deref(), adversary.as_deref(), &mut m)?,
        Command::Detect { signal } => {
            detect(out, cfg, seed, *signal, &mut m)?;
        }
        Command::Ablate { lambdas, metrics } => {
            stage_victims(out, cfg, seed, None, &mut m)?;
            let victims = Some(out.join(VICTIMS_CKPT));
            let mut children: Vec<(String, ExperimentConfig)> = Vec::new();
            for &l in lambdas {
                let mut c = cfg.clone();
                c.attack.lambda = l;
                if l == 0.0 {
                    c.attack.method = AttackMethod::Ami;
                }
                children.push((format!("lambda_{l}"), c));
            }
            for &metric in metrics {
                let mut c = cfg.clone();
                c.attack.metric = Some(metric);
                children.push((format!("metric_{}", metric.name()), c));
            }
            for (name, c) in children {
                run_command(&Command::Attack { victims: victims.clone() }, &c, seed, &out.join(&name))?;
                m.children.push(name);
            }
        }
    }
    m.finish(out)
}

fn defend(
    out: &Path,
    cfg: &ExperimentConfig,
    seed: u64,
    mode: DefendMode,
    victims: Option<&Path>,
    adversary: Option<&Path>,
    m: &mut RunManifest,
) -> Result<()> {
    let master = Seeder::new(seed);
    let hardened = match (mode, victims) {
        (DefendMode::ReAmi | DefendMode::PosAmi, Some(p)) => {
            m.add_input(p)?;
            load_victims(cfg, p)?
        }
        _ => {
            let normal = stage_victims(out, cfg, seed, if mode == DefendMode::At { victims } else { None }, m)?;
            let adv = match adversary {
                Some(p) => {
                    m.add_input(p)?;
                    load_adversary(cfg, p)?
                }
                None => stage_attack(out, cfg, &cfg.attack, seed, &normal, m, "attack_")?.0,
            };
            let mut hardened = normal.thaw();
            let curve = dual_adversarial_train(&mut hardened, &adv, &cfg.env, &cfg.defense, Some(&cfg.attack), &master.child(2))?;
            write_csv(out.join("at_curve.csv"), &curve)?;
            m.add_metric(out, "at_curve.csv")?;
            checkpoint::save(out.join("hardened.ckpt"), &hardened.parameters())?;
            m.add_checkpoint(out, "hardened.ckpt")?;
            let hardened = hardened.freeze();
            let env = cfg.attack.train.env_for(&cfg.env);
            let slot = cfg.attack.adversary_slot;
            let ev = master.child(9);
            let mut rows = Vec::new();
            for (name, v) in [("normal", &normal), ("hardened", &hardened)] {
                let attacked = evaluate_attack(Some(&adv), v, &env, slot, cfg.eval_episodes, &ev)?;
                let clean = evaluate_attack(None, v, &env, slot, cfg.eval_episodes, &ev)?;
                rows.push(AtRow {
                    victims: name.to_string(),
                    adv_reward_mean: attacked.adversary.mean,
                    adv_reward_ci95: attacked.adversary.ci95,
                    team_reward_under_attack: attacked.team.mean,
                    team_reward_no_attack: clean.team.mean,
                });
            }
            write_csv(out.join("at_eval.csv"), &rows)?;
            m.add_metric(out, "at_eval.csv")?;
            hardened
        }
    };
    let protocols = match mode {
        DefendMode::At => return Ok(()),
        DefendMode::ReAmi => [Protocol::ReAmi],
        DefendMode::PosAmi => [Protocol::PosAmi],
    };
    let seeds: Vec<u64> = (0..cfg.seeds as u64).map(|k| master.child(4).derive(Stream::Scripted, k)).collect();
    let rows = rerun_attack_protocols(&hardened, &cfg.env, &cfg.attack, &seeds, &protocols, cfg.eval_episodes)?;
    write_csv(out.join("protocols.csv"), &rows)?;
    m.add_metric(out, "protocols.csv")
}

/// Accuracy at each episode's first and last step, and AUC of the last.
pub fn endpoint_metrics(det: &Detector, data: &[DetectionEpisode]) -> Result<(f64, f64, Option<f64>)> {
    let mut first = 0usize;
    let mut last = 0usize;
    let mut finals = Vec::with_capacity(data.len());
    let labels: Vec<bool> = data.iter().map(|e| e.label).collect();
    for e in data {
        let p = det.predict(&e.features)?;
        let (Some(a), Some(b)) = (p.first(), p.last()) else {
            return Err(AmiError::Validation("empty detection episode".into()));
        };
        first += usize::from((*a > 0.5) == e.label);
        last += usize::from((*b > 0.5) == e.label);
        finals.push(*b);
    }
    let n = data.len().max(1) as f64;
    Ok((first as f64 / n, last as f64 / n, auc(&finals, &labels)))
}

fn detect(out: &Path, cfg: &ExperimentConfig, seed: u64, signal: Signal, m: &mut RunManifest) -> Result<DetectionSummary> {
    let master = Seeder::new(seed);
    let victims = stage_victims(out, cfg, seed, None, m)?;
    let baseline_cfg = AttackConfig {
        method: AttackMethod::AdvPolicy,
        ..cfg.attack.clone()
    };
    let ami_cfg = AttackConfig {
        method: AttackMethod::Ami,
        ..cfg.attack.clone()
    };
    let (baseline, _) = stage_attack(out, cfg, &baseline_cfg, seed, &victims, m, "baseline_")?;
    let (ami, _) = stage_attack(out, cfg, &ami_cfg, seed, &victims, m, "ami_")?;

    let env = cfg.attack.train.env_for(&cfg.env);
    let slot = cfg.attack.adversary_slot;
    let n = cfg.detection_episodes;
    let d = master.child(3);
    let space = victims.space().clone();
    let make = |adv: Option<&dyn SlotPolicy>, offset: u64, label: bool| -> Result<Vec<DetectionEpisode>> {
        Ok(collect_detection_episodes(adv, &victims, &env, slot, n, offset, &d)?
            .iter()
            .map(|e| DetectionEpisode::from_episode(e, signal, &space, label))
            .collect())
    };
    let mut train = make(None, 0, false)?;
    train.extend(make(Some(&baseline), 100_000, true)?);
    let mut test = make(None, 200_000, false)?;
    test.extend(make(Some(&ami), 300_000, true)?);
    write_dataset(out.join("detect_train.amd"), signal, &train)?;
    write_dataset(out.join("detect_test.amd"), signal, &test)?;
    m.add_metric(out, "detect_train.amd")?;
    m.add_metric(out, "detect_test.amd")?;

    let det = train_detector(&train, &cfg.detector, &mut d.child(1).rng(Stream::Detector, 0))?;
    checkpoint::save(out.join("detector.ckpt"), &det.params)?;
    m.add_checkpoint(out, "detector.ckpt")?;
    write_csv(out.join("detection_curve.csv"), &detection_curve(&det, &test)?)?;
    m.add_metric(out, "detection_curve.csv")?;
    write_csv(out.join("detection_train_curve.csv"), &detection_curve(&det, &train)?)?;
    m.add_metric(out, "detection_train_curve.csv")?;
    let control = label_shuffle_control(&train, &cfg.detector, &mut d.child(2).rng(Stream::Detector, 0))?;
    let shuffled_test = shuffle_labels(&test, &mut d.child(2).rng(Stream::Detector, 1));
    write_csv(out.join("detection_shuffle_curve.csv"), &detection_curve(&control, &shuffled_test)?)?;
    m.add_metric(out, "detection_shuffle_curve.csv")?;

    let (accuracy_first, accuracy_final, auc_final) = endpoint_metrics(&det, &test)?;
    let (_, train_accuracy_final, _) = endpoint_metrics(&det, &train)?;
    let (_, _, shuffle_auc_final) = endpoint_metrics(&control, &shuffled_test)?;
    let summary = DetectionSummary {
        signal,
        accuracy_first,
        accuracy_final,
        auc_final,
        train_accuracy_final,
        shuffle_auc_final,
    };
    write_json(out.join("detection.json"), &summary)?;
    m.add_metric(out, "detection.json")?;
    Ok(summary)
}

/// Outcome of re-running a manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub matched: Vec<String>,
    pub mismatched: Vec<String>,
}

impl ReplayReport {
    pub fn ok(&self) -> bool {
        self.mismatched.is_empty() && !self.matched.is_empty()
    }
}

/// Verifies `src`, re-runs its command with the recorded config and seed
/// into `out`, and compares every hashed file.
pub fn replay(src: &Path, out: &Path) -> Result<ReplayReport> {
    let m = RunManifest::load(src)?;
    m.verify(src)?;
    for (path, want) in &m.inputs {
        if &checkpoint::file_hash(PathBuf::from(path))? != want {
            return Err(AmiError::Integrity(format!("input {path} changed since the run")));
        }
    }
    let new = run_command(&m.command, &m.config, m.seed, out)?;
    let mut want = m.all_metric_hashes(src)?;
    want.extend(m.checkpoints.iter().map(|(k, v)| (k.clone(), v.clone())));
    let mut got = new.all_metric_hashes(out)?;
    got.extend(new.checkpoints.iter().map(|(k, v)| (k.clone(), v.clone())));
    let mut report = ReplayReport {
        matched: Vec::new(),
        mismatched: Vec::new(),
    };
    for (k, v) in &want {
        if got.get(k) == Some(v) {
            report.matched.push(k.clone());
        } else {
            report.mismatched.push(k.clone());
        }
    }
    Ok(report)
}

/// Mean over seeds of per-iteration attack metrics, for plotting.
pub fn summarize_curves(curves: &[Vec<f64>]) -> Vec<Summary> {
    let len = curves.iter().map(Vec::len).min().unwrap_or(0);
    (0..len)
        .map(|i| summarize(&curves.iter().map(|c| c[i]).collect::<Vec<_>>()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::GatherGridConfig;
    use crate::harness::config::Preset;

    fn tiny() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::preset("gathergrid", Preset::Desk).unwrap();
        cfg.env = EnvConfig::Gathergrid(GatherGridConfig {
            n_agents: 3,
            grid: 4,
            max_episode_len: 8,
            ..GatherGridConfig::default()
        });
        for t in [&mut cfg.victims, &mut cfg.attack.train, &mut cfg.defense.train] {
            t.iterations = 2;
            t.parallel_envs = 2;
            t.hidden_dim = 8;
        }
        cfg.eval_episodes = 3;
        cfg.seeds = 2;
        cfg.detection_episodes = 4;
        cfg.detector.hidden = 4;
        cfg.detector.epochs = 2;
        cfg
    }

    #[test]
    fn attack_run_replays_byte_identically() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a");
        let m = run_command(&Command::Attack { victims: None }, &tiny(), 7, &a).unwrap();
        assert!(m.metrics.contains_key("metrics.csv") && m.checkpoints.contains_key("adversary.ckpt"));
        assert!(m.unhashed.contains(&"timing.csv".to_string()));
        let header = std::fs::read_to_string(a.join("metrics.csv")).unwrap();
        assert!(header.starts_with("iter,env_steps,adv_reward_mean,adv_reward_ci95,influence_mean,nll_opp_model\n"));
        let r = replay(&a, &dir.path().join("b")).unwrap();
        assert!(r.ok(), "{r:?}");

        std::fs::write(a.join("eval.csv"), "tampered").unwrap();
        assert!(matches!(replay(&a, &dir.path().join("c")), Err(AmiError::Integrity(_))));
    }

    #[test]
    fn zero_weight_and_baseline_write_identical_metrics() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny();
        cfg.attack.lambda = 0.0;
        run_command(&Command::Attack { victims: None }, &cfg, 3, &dir.path().join("ami")).unwrap();
        cfg.attack.method = AttackMethod::AdvPolicy;
        cfg.attack.lambda = 0.5;
        run_command(&Command::Attack { victims: None }, &cfg, 3, &dir.path().join("adv")).unwrap();
        for f in ["metrics.csv", "eval.csv", "targets.csv", "adversary.ckpt"] {
            assert_eq!(
                std::fs::read(dir.path().join("ami").join(f)).unwrap(),
                std::fs::read(dir.path().join("adv").join(f)).unwrap(),
                "{f}"
            );
        }
    }

    #[test]
    fn ablation_makes_one_child_per_setting() {
        let dir = tempfile::tempdir().unwrap();
        let m = run_command(
            &Command::Ablate {
                lambdas: vec![0.0, 0.01, 0.1, 1.0, 10.0],
                metrics: vec![DistanceMetric::L1, DistanceMetric::Ce],
            },
            &tiny(),
            1,
            dir.path(),
        )
        .unwrap();
        assert_eq!(m.children.len(), 7);
        assert!(m.children.contains(&"lambda_0.01".to_string()));
        m.verify(dir.path()).unwrap();
        let child = RunManifest::load(&dir.path().join("metric_ce")).unwrap();
        assert_eq!(child.config.attack.metric, Some(DistanceMetric::Ce));
        assert_eq!(child.inputs.len(), 1);
    }

    #[test]
    fn defend_and_detect_write_their_tables() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny();
        let at = dir.path().join("at");
        run_command(&Command::Defend { mode: DefendMode::At, victims: None, adversary: None }, &cfg, 1, &at).unwrap();
        let rows: Vec<AtRow> = crate::harness::output::read_csv(at.join("at_eval.csv")).unwrap();
        assert_eq!(rows.len(), 2);
        let pos = dir.path().join("pos");
        let cmd = Command::Defend {
            mode: DefendMode::PosAmi,
            victims: Some(at.join("hardened.ckpt")),
            adversary: None,
        };
        run_command(&cmd, &cfg, 1, &pos).unwrap();
        let rows: Vec<crate::defense::ProtocolRow> = crate::harness::output::read_csv(pos.join("protocols.csv")).unwrap();
        assert_eq!(rows.len(), 2 * 2);
        let det = dir.path().join("det");
        run_command(&Command::Detect { signal: Signal::Action }, &cfg, 1, &det).unwrap();
        let s: DetectionSummary = crate::harness::output::read_json(det.join("detection.json")).unwrap();
        assert_eq!(s.signal, Signal::Action);
    }

    #[test]
    fn missing_checkpoint_names_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("nope.ckpt");
        let err = run_command(&Command::Attack { victims: Some(missing.clone()) }, &tiny(), 1, &dir.path().join("x")).unwrap_err();
        assert!(err.to_string().contains("nope.ckpt"), "{err}");
    }
}
