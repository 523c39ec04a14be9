//! Aggregates attack run directories into a paired comparison.
//!
//! Runs are grouped by environment, method, weight and metric. Every group
//! is paired seed by seed with the `adv-policy` group of the same
//! environment.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::output::{read_csv, read_json, write_csv, Command, RunManifest};
use super::pipeline::{summarize_curves, AttackSummary};
use super::stats::{paired_tests, summarize};
use crate::attack::{AttackMethod, MetricsRow};
use crate::error::{AmiError, Result};

/// One attack run as loaded from disk.
#[derive(Debug, Clone)]
pub struct LoadedRun {
    pub dir: PathBuf,
    pub env: String,
    pub label: String,
    pub summary: AttackSummary,
    pub metrics: Vec<MetricsRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub env: String,
    pub label: String,
    pub seeds: usize,
    pub adv_reward_mean: f64,
    pub adv_reward_ci95: f64,
    /// Fewer than two seeds or zero spread, so the interval has no width.
    pub degenerate: bool,
    pub team_reward_mean: f64,
    pub random_adv_reward_mean: f64,
    pub no_attack_team_reward_mean: f64,
    /// Paired against the baseline of the same environment; empty for the
    /// baseline itself, when no baseline was given, or (for the tests) with
    /// a single seed.
    pub diff_vs_baseline: Option<f64>,
    pub p_greater: Option<f64>,
    pub wilcoxon_p: Option<f64>,
    pub flagged: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub iter: usize,
    pub seeds: usize,
    pub adv_reward_mean: f64,
    pub adv_reward_ci95: f64,
}

fn label_of(s: &AttackSummary) -> String {
    if s.method == AttackMethod::AdvPolicy {
        return s.method.cli_name().to_string();
    }
    format!("{}_{}_{}", s.method.cli_name(), s.lambda, s.metric.name())
}

/// Loads every attack run under `dirs`, descending into sweep children.
pub fn load_runs(dirs: &[PathBuf]) -> Result<Vec<LoadedRun>> {
    let mut out = Vec::new();
    for d in dirs {
        collect(d, &mut out)?;
    }
    Ok(out)
}

fn collect(dir: &Path, out: &mut Vec<LoadedRun>) -> Result<()> {
    let m = RunManifest::load(dir)?;
    if let Command::Attack { .. } = m.command {
        let summary: AttackSummary = read_json(dir.join("summary.json"))?;
        out.push(LoadedRun {
            dir: dir.to_path_buf(),
            env: m.config.env.name().to_string(),
            label: label_of(&summary),
            metrics: read_csv(dir.join("metrics.csv"))?,
            summary,
        });
    }
    for c in &m.children {
        collect(&dir.join(c), out)?;
    }
    Ok(())
}

type Groups<'a> = BTreeMap<(String, String), BTreeMap<u64, &'a LoadedRun>>;

fn group(runs: &[LoadedRun]) -> Result<Groups<'_>> {
    let mut g: Groups = BTreeMap::new();
    for r in runs {
        let slot = g.entry((r.env.clone(), r.label.clone())).or_default();
        if let Some(prev) = slot.insert(r.summary.seed, r) {
            return Err(AmiError::Pairing(format!(
                "seed {} of {} appears twice ({} and {})",
                r.summary.seed,
                r.label,
                prev.dir.display(),
                r.dir.display()
            )));
        }
    }
    Ok(g)
}

/// Builds one row per group. Groups paired with a baseline must cover
/// exactly the baseline's seeds.
pub fn report_rows(runs: &[LoadedRun]) -> Result<Vec<ReportRow>> {
    let groups = group(runs)?;
    let baseline = AttackMethod::AdvPolicy.cli_name();
    let mut rows = Vec::new();
    for ((env, label), by_seed) in &groups {
        let adv: Vec<f64> = by_seed.values().map(|r| r.summary.adversary_eval.mean).collect();
        let stats = summarize(&adv);
        let mean_of = |f: fn(&AttackSummary) -> f64| by_seed.values().map(|r| f(&r.summary)).sum::<f64>() / adv.len() as f64;
        let mut row = ReportRow {
            env: env.clone(),
            label: label.clone(),
            seeds: adv.len(),
            adv_reward_mean: stats.mean,
            adv_reward_ci95: stats.ci95,
            degenerate: stats.degenerate || stats.std == 0.0,
            team_reward_mean: mean_of(|s| s.team_eval.mean),
            random_adv_reward_mean: mean_of(|s| s.random_adversary_eval.mean),
            no_attack_team_reward_mean: mean_of(|s| s.no_attack_team_eval.mean),
            diff_vs_baseline: None,
            p_greater: None,
            wilcoxon_p: None,
            flagged: None,
        };
        if label != baseline {
            if let Some(base) = groups.get(&(env.clone(), baseline.to_string())) {
                if !base.keys().eq(by_seed.keys()) {
                    return Err(AmiError::Pairing(format!(
                        "{label} seeds {:?} differ from {baseline} seeds {:?}",
                        by_seed.keys().collect::<Vec<_>>(),
                        base.keys().collect::<Vec<_>>()
                    )));
                }
                let b: Vec<f64> = base.values().map(|r| r.summary.adversary_eval.mean).collect();
                row.diff_vs_baseline = Some(adv.iter().zip(&b).map(|(x, y)| x - y).sum::<f64>() / adv.len() as f64);
                if adv.len() >= 2 {
                    let t = paired_tests(&adv, &b)?;
                    row.p_greater = Some(t.p_greater);
                    row.wilcoxon_p = Some(t.wilcoxon_p);
                    row.flagged = Some(t.flagged);
                }
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Per-iteration mean and CI of the training reward across seeds.
pub fn curve_rows(runs: &[&LoadedRun]) -> Vec<CurveRow> {
    let curves: Vec<Vec<f64>> = runs
        .iter()
        .map(|r| r.metrics.iter().map(|m| m.adv_reward_mean).collect())
        .collect();
    summarize_curves(&curves)
        .into_iter()
        .enumerate()
        .map(|(iter, s)| CurveRow {
            iter,
            seeds: s.n,
            adv_reward_mean: s.mean,
            adv_reward_ci95: s.ci95,
        })
        .collect()
}

/// Writes `report.csv`, `report.md` and one `curve_<env>_<label>.csv` per
/// group into `out`.
pub fn write_report(dirs: &[PathBuf], out: &Path) -> Result<Vec<ReportRow>> {
    let runs = load_runs(dirs)?;
    if runs.is_empty() {
        return Err(AmiError::Validation("no attack runs found".into()));
    }
    let rows = report_rows(&runs)?;
    std::fs::create_dir_all(out).map_err(|e| AmiError::path(out, e))?;
    write_csv(out.join("report.csv"), &rows)?;
    for ((env, label), by_seed) in group(&runs)? {
        let members: Vec<&LoadedRun> = by_seed.into_values().collect();
        write_csv(out.join(format!("curve_{env}_{label}.csv")), &curve_rows(&members))?;
    }
    let mut md = String::from(
        "| env | run | seeds | adversary reward | team reward | random | no-attack team | diff vs adv-policy | p (t, greater) | p (wilcoxon) |\n\
         |---|---|---|---|---|---|---|---|---|---|\n",
    );
    let opt = |x: Option<f64>| x.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into());
    for r in &rows {
        let flag = if r.flagged == Some(true) { " (degenerate)" } else { "" };
        let _ = writeln!(
            md,
            "| {} | {} | {} | {:.3} ± {:.3} | {:.3} | {:.3} | {:.3} | {} | {}{} | {} |",
            r.env,
            r.label,
            r.seeds,
            r.adv_reward_mean,
            r.adv_reward_ci95,
            r.team_reward_mean,
            r.random_adv_reward_mean,
            r.no_attack_team_reward_mean,
            opt(r.diff_vs_baseline),
            opt(r.p_greater),
            flag,
            opt(r.wilcoxon_p),
        );
    }
    std::fs::write(out.join("report.md"), md).map_err(|e| AmiError::path(out.join("report.md"), e))?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::stats::Summary;
    use crate::influence::DistanceMetric;

    fn run(method: AttackMethod, seed: u64, adv: f64) -> LoadedRun {
        let s = |mean: f64| Summary {
            n: 4,
            mean,
            std: 1.0,
            ci95: 1.0,
            degenerate: false,
        };
        let summary = AttackSummary {
            method,
            lambda: 0.05,
            metric: DistanceMetric::L1,
            seed,
            adversary_eval: s(adv),
            team_eval: s(-adv),
            random_adversary_eval: s(1.0),
            random_team_eval: s(0.0),
            no_attack_adversary_eval: s(0.0),
            no_attack_team_eval: s(5.0),
            adversary_returns: vec![adv; 4],
            distance_min: None,
            distance_max: None,
            victim_parameter_reads: 0,
        };
        LoadedRun {
            dir: PathBuf::from(format!("{}-{seed}", method.cli_name())),
            env: "gathergrid".into(),
            label: label_of(&summary),
            summary,
            metrics: Vec::new(),
        }
    }

    #[test]
    fn groups_pair_by_seed() {
        let mut runs: Vec<LoadedRun> = (0..5).map(|s| run(AttackMethod::AdvPolicy, s, 10.0 + s as f64)).collect();
        runs.extend((0..5).rev().map(|s| run(AttackMethod::Ami, s, 12.0 + s as f64 + 0.1 * (s % 2) as f64)));
        let rows = report_rows(&runs).unwrap();
        assert_eq!(rows.len(), 2);
        let ami = rows.iter().find(|r| r.label.starts_with("ami")).unwrap();
        assert!((ami.diff_vs_baseline.unwrap() - 2.04).abs() < 1e-9);
        assert!(ami.p_greater.unwrap() < 0.01);
        assert!(rows.iter().find(|r| r.label == "adv-policy").unwrap().diff_vs_baseline.is_none());
        assert!(!ami.degenerate);
    }

    #[test]
    fn single_seed_is_degenerate() {
        let rows = report_rows(&[run(AttackMethod::Ami, 3, 1.0)]).unwrap();
        assert!(rows[0].degenerate);
        assert_eq!(rows[0].adv_reward_ci95, 0.0);
    }

    #[test]
    fn mismatched_or_duplicate_seeds_are_pairing_errors() {
        let mut runs: Vec<LoadedRun> = (0..3).map(|s| run(AttackMethod::AdvPolicy, s, 1.0)).collect();
        runs.extend((1..4).map(|s| run(AttackMethod::Ami, s, 2.0)));
        assert!(matches!(report_rows(&runs), Err(AmiError::Pairing(_))));
        let dup = vec![run(AttackMethod::Ami, 0, 1.0), run(AttackMethod::Ami, 0, 2.0)];
        assert!(matches!(report_rows(&dup), Err(AmiError::Pairing(_))));
    }
}
