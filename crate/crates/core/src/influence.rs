//! Information-theoretic influence measures and the targeted influence reward.
//!
//! All quantities are in nats.

use serde::{Deserialize, Serialize};

use crate::error::{AmiError, Result};
use crate::nn::{categorical_entropy, Action, ActionDistribution, ActionSpace};

/// Returns `(H(p), KL(p || U))` for a categorical `p` over `|A|` actions.
/// The two always sum to `ln |A|`.
pub fn entropy_kl_identity(probs: &[f64]) -> Result<(f64, f64)> {
    ActionDistribution::Categorical { probs: probs.to_vec() }.validate()?;
    let n = probs.len() as f64;
    let h = categorical_entropy(probs);
    let kl = probs.iter().filter(|&&p| p > 0.0).map(|p| p * (p * n).ln()).sum();
    Ok((h, kl))
}

/// KL divergence from `dist` to the uniform distribution over `space`.
/// For a box, the density is assumed to lie inside it, giving
/// `ln vol - H(dist)`.
pub fn kl_to_uniform(dist: &ActionDistribution, space: &ActionSpace) -> Result<f64> {
    match dist {
        ActionDistribution::Categorical { probs } => Ok(entropy_kl_identity(probs)?.1),
        ActionDistribution::Gaussian { .. } => Ok(space.log_volume() - dist.entropy()),
    }
}

/// Split of `I(a^adv; a^v)` into the victim-marginal entropy and the negated
/// conditional entropy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InfluenceDecomposition {
    pub mutual_information: f64,
    /// `H(a^v)`
    pub minority: f64,
    /// `-H(a^v | a^adv)`
    pub majority: f64,
}

/// Decomposes the MI of a joint table `joint[adversary][victim]`.
pub fn decompose_mi(joint: &[Vec<f64>]) -> Result<InfluenceDecomposition> {
    let cols = joint.first().map_or(0, |r| r.len());
    if cols == 0 || joint.iter().any(|r| r.len() != cols) {
        return Err(AmiError::Validation("joint table must be a non-empty rectangle".into()));
    }
    let total: f64 = joint.iter().flatten().sum();
    if joint.iter().flatten().any(|p| !(*p >= 0.0)) || (total - 1.0).abs() > 1e-9 {
        return Err(AmiError::Validation(format!("joint table not normalized (sum {total})")));
    }
    let victim: Vec<f64> = (0..cols).map(|j| joint.iter().map(|r| r[j]).sum()).collect();
    let minority = categorical_entropy(&victim);
    let mut conditional = 0.0;
    for row in joint {
        let pa: f64 = row.iter().sum();
        if pa > 0.0 {
            let cond: Vec<f64> = row.iter().map(|p| p / pa).collect();
            conditional += pa * categorical_entropy(&cond);
        }
    }
    Ok(InfluenceDecomposition {
        mutual_information: minority - conditional,
        minority,
        majority: -conditional,
    })
}

/// How the expected victim distribution is scored against a target action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMetric {
    L1,
    L2,
    Linf,
    Ce,
    Prob,
    L1Mean,
}

impl DistanceMetric {
    pub const DISCRETE: [DistanceMetric; 5] = [Self::L1, Self::L2, Self::Linf, Self::Ce, Self::Prob];
    pub const CONTINUOUS: [DistanceMetric; 3] = [Self::L1Mean, Self::Ce, Self::Prob];

    pub fn compatible(self, space: &ActionSpace) -> bool {
        if space.is_discrete() {
            Self::DISCRETE.contains(&self)
        } else {
            Self::CONTINUOUS.contains(&self)
        }
    }

    /// `l1` for discrete spaces, `prob` for continuous ones.
    pub fn default_for(space: &ActionSpace) -> Self {
        if space.is_discrete() {
            Self::L1
        } else {
            Self::Prob
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::L1 => "l1",
            Self::L2 => "l2",
            Self::Linf => "linf",
            Self::Ce => "ce",
            Self::Prob => "prob",
            Self::L1Mean => "l1_mean",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        [Self::L1, Self::L2, Self::Linf, Self::Ce, Self::Prob, Self::L1Mean]
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| AmiError::Config(format!("unknown metric `{s}` (l1, l2, linf, ce, prob, l1_mean)")))
    }

    /// Closed range every value of this metric lies in, for discrete spaces.
    pub fn discrete_bounds(self) -> (f64, f64) {
        match self {
            Self::L1 => (-2.0, 0.0),
            Self::L2 => (-std::f64::consts::SQRT_2, 0.0),
            Self::Linf => (-1.0, 0.0),
            Self::Prob => (0.0, 1.0),
            Self::Ce | Self::L1Mean => (f64::NEG_INFINITY, 0.0),
        }
    }
}

/// Similarity of `expected` to `target` (larger means closer). Cross-entropy
/// of a zero-probability target returns `-inf`.
pub fn distance(expected: &ActionDistribution, target: &Action, metric: DistanceMetric) -> Result<f64> {
    let mismatch = || AmiError::Validation(format!("metric `{}` does not fit {expected:?} / {target:?}", metric.name()));
    match (expected, target) {
        (ActionDistribution::Categorical { probs }, Action::Discrete(a)) => {
            if *a >= probs.len() {
                return Err(mismatch());
            }
            let diff = probs
                .iter()
                .enumerate()
                .map(|(k, p)| (p - if k == *a { 1.0 } else { 0.0 }).abs());
            Ok(match metric {
                DistanceMetric::L1 => -diff.sum::<f64>(),
                DistanceMetric::L2 => -diff.map(|d| d * d).sum::<f64>().sqrt(),
                DistanceMetric::Linf => -diff.fold(0.0, f64::max),
                DistanceMetric::Ce => expected.log_prob(target),
                DistanceMetric::Prob => probs[*a],
                DistanceMetric::L1Mean => return Err(mismatch()),
            })
        }
        (ActionDistribution::Gaussian { mean, .. }, Action::Continuous(x)) if mean.len() == x.len() => Ok(match metric {
            DistanceMetric::L1Mean => -mean.iter().zip(x).map(|(m, v)| (m - v).abs()).sum::<f64>(),
            DistanceMetric::Ce => expected.log_prob(target),
            DistanceMetric::Prob => expected.log_prob(target).exp(),
            _ => return Err(mismatch()),
        }),
        _ => Err(mismatch()),
    }
}

/// Per-step targeted influence: one expected distribution, target and
/// distance per victim, and their sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfluenceRecord {
    pub expected: Vec<ActionDistribution>,
    pub targets: Vec<Action>,
    pub distances: Vec<f64>,
    pub total: f64,
}

/// `sum_i d(expected_i, target_i)` over every victim.
pub fn ami_influence_reward(
    expected: Vec<ActionDistribution>,
    targets: Vec<Action>,
    metric: DistanceMetric,
) -> Result<InfluenceRecord> {
    if expected.is_empty() || expected.len() != targets.len() {
        return Err(AmiError::Integrity(format!(
            "{} expected distributions for {} targets",
            expected.len(),
            targets.len()
        )));
    }
    let distances: Vec<f64> = expected
        .iter()
        .zip(&targets)
        .map(|(e, t)| distance(e, t, metric))
        .collect::<Result<_>>()?;
    let total = distances.iter().sum();
    Ok(InfluenceRecord {
        expected,
        targets,
        distances,
        total,
    })
}

/// One point of the two-action copy-model curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToyPoint {
    pub p: f64,
    pub mi: f64,
    pub majority: f64,
    pub minority: f64,
}

/// Two-action game where the adversary copies the victim's action with
/// probability `p` and plays the other action otherwise; the victim's
/// marginal stays fixed.
pub fn toy_example(p: f64, victim_marginal: [f64; 2]) -> Result<ToyPoint> {
    if !(0.0..=1.0).contains(&p) {
        return Err(AmiError::Validation(format!("copy probability {p} outside [0, 1]")));
    }
    let joint: Vec<Vec<f64>> = (0..2)
        .map(|adv| {
            (0..2)
                .map(|v| victim_marginal[v] * if adv == v { p } else { 1.0 - p })
                .collect()
        })
        .collect();
    let d = decompose_mi(&joint)?;
    Ok(ToyPoint {
        p,
        mi: d.mutual_information,
        majority: d.majority,
        minority: d.minority,
    })
}

pub const TOY_MARGINAL: [f64; 2] = [0.2, 0.8];

/// The copy-model curve on `p = 0, 1/steps, ..., 1`.
pub fn toy_curve(steps: usize) -> Vec<ToyPoint> {
    (0..=steps)
        .map(|k| toy_example(k as f64 / steps as f64, TOY_MARGINAL).expect("p in range"))
        .collect()
}

/// Running mean and variance (Welford) for reward normalization.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunningNorm {
    pub count: f64,
    pub mean: f64,
    m2: f64,
}

impl RunningNorm {
    pub fn update(&mut self, xs: &[f64]) {
        for &x in xs {
            self.count += 1.0;
            let d = x - self.mean;
            self.mean += d / self.count;
            self.m2 += d * (x - self.mean);
        }
    }

    pub fn std(&self) -> f64 {
        if self.count < 2.0 {
            1.0
        } else {
            (self.m2 / self.count).sqrt().max(1e-8)
        }
    }

    pub fn normalize(&self, x: f64) -> f64 {
        (x - self.mean) / self.std()
    }
}
