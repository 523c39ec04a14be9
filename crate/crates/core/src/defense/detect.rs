use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{EnvConfig, StepRecord};
use crate::error::{AmiError, Result};
use crate::harness::{Seeder, Stream};
use crate::mappo::{run_episode, Episode, SlotPolicy};
use crate::nn::{adam_step, gradient_clip, ActionSpace, AdamConfig, AdamState, GruClassifier, ParameterSet};

const PREFIX: &str = "det/";
const MAGIC: &[u8; 4] = b"AMD1";

/// Which observable stream the detector reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Signal {
    /// All agents' local observations, concatenated.
    Obs,
    State,
    /// All agents' actions, encoded and concatenated.
    Action,
}

impl Signal {
    pub const ALL: [Signal; 3] = [Signal::Obs, Signal::State, Signal::Action];

    pub fn name(self) -> &'static str {
        match self {
            Signal::Obs => "obs",
            Signal::State => "state",
            Signal::Action => "action",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| AmiError::Config(format!("unknown signal `{s}` (obs, state, action)")))
    }

    fn code(self) -> u32 {
        match self {
            Signal::Obs => 0,
            Signal::State => 1,
            Signal::Action => 2,
        }
    }

    fn from_code(c: u32) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|s| s.code() == c)
            .ok_or_else(|| AmiError::Format(format!("unknown signal code {c}")))
    }

    pub fn features(self, r: &StepRecord, space: &ActionSpace) -> Vec<f64> {
        match self {
            Signal::Obs => r.obs.concat(),
            Signal::State => r.state.clone(),
            Signal::Action => {
                let mut x = Vec::new();
                for a in &r.actions {
                    space.encode_into(a, &mut x);
                }
                x
            }
        }
    }
}

/// One labeled feature sequence; `label` is true for attacked episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionEpisode {
    pub features: Vec<Vec<f64>>,
    pub label: bool,
}

impl DetectionEpisode {
    pub fn from_episode(ep: &Episode, signal: Signal, space: &ActionSpace, label: bool) -> Self {
        Self {
            features: ep.records.iter().map(|r| signal.features(r, space)).collect(),
            label,
        }
    }
}

/// Rolls out `n` episodes with `adversary` in `slot` (or victims everywhere
/// when `None`). Episode `i` uses detector stream index `offset + i`, so
/// disjoint offsets give disjoint episode sets.
#[allow(clippy::too_many_arguments)]
pub fn collect_detection_episodes(
    adversary: Option<&dyn SlotPolicy>,
    victims: &dyn SlotPolicy,
    env: &EnvConfig,
    slot: usize,
    n: usize,
    offset: u64,
    seeder: &Seeder,
) -> Result<Vec<Episode>> {
    let mut e = env.build()?;
    e.set_adversary_slot(Some(slot))?;
    (offset..offset + n as u64)
        .map(|i| {
            let mut rng = seeder.rng(Stream::Detector, i);
            run_episode(e.as_mut(), seeder.derive(Stream::Detector, i), &mut |s, o| match adversary {
                Some(a) if s == slot => a.act(s, &o.obs[s], &mut rng, false),
                _ => victims.act(s, &o.obs[s], &mut rng, false),
            })
        })
        .collect()
}

pub fn write_dataset(path: impl AsRef<Path>, signal: Signal, episodes: &[DetectionEpisode]) -> Result<()> {
    let dim = episodes.iter().flat_map(|e| e.features.first()).map(Vec::len).next().unwrap_or(0);
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&signal.code().to_le_bytes());
    buf.extend_from_slice(&(dim as u32).to_le_bytes());
    buf.extend_from_slice(&(episodes.len() as u32).to_le_bytes());
    for ep in episodes {
        buf.push(ep.label as u8);
        buf.extend_from_slice(&(ep.features.len() as u32).to_le_bytes());
        for x in &ep.features {
            if x.len() != dim {
                return Err(AmiError::Dimension("detection features have mixed widths".into()));
            }
            for v in x {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    let path = path.as_ref();
    let mut f = std::fs::File::create(path).map_err(|e| AmiError::path(path, e))?;
    f.write_all(&buf)?;
    Ok(())
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<(Signal, Vec<DetectionEpisode>)> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .map_err(|e| AmiError::path(path, e))?
        .read_to_end(&mut bytes)?;
    let mut cur = Cursor { bytes: &bytes, pos: 0 };
    if cur.take(4)? != MAGIC {
        return Err(AmiError::Format("not a detection dataset".into()));
    }
    let signal = Signal::from_code(cur.u32()?)?;
    let dim = cur.u32()? as usize;
    let n = cur.u32()? as usize;
    let mut out = Vec::with_capacity(n.min(1 << 16));
    for _ in 0..n {
        let label = match cur.take(1)?[0] {
            0 => false,
            1 => true,
            b => return Err(AmiError::Format(format!("bad label byte {b}"))),
        };
        let len = cur.u32()? as usize;
        let mut features = Vec::with_capacity(len.min(1 << 16));
        for _ in 0..len {
            let x = (0..dim).map(|_| cur.f64()).collect::<Result<Vec<_>>>()?;
            features.push(x);
        }
        out.push(DetectionEpisode { features, label });
    }
    if cur.pos != bytes.len() {
        return Err(AmiError::Format("trailing bytes in detection dataset".into()));
    }
    Ok((signal, out))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(AmiError::Format("truncated detection dataset".into()));
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorConfig {
    pub hidden: usize,
    pub lr: f64,
    pub epochs: usize,
    /// Episodes per gradient step.
    pub batch: usize,
    pub max_grad_norm: f64,
    /// Share of each class held out to pick the best epoch.
    pub validation_fraction: f64,
    /// Validation loss must drop by at least this much to replace the
    /// current best snapshot (the untrained, constant predictor included).
    pub min_delta: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            lr: 3e-3,
            epochs: 30,
            batch: 16,
            max_grad_norm: 5.0,
            validation_fraction: 0.2,
            min_delta: 1e-3,
        }
    }
}

/// A trained recurrent classifier plus the feature standardization fitted
/// on its training set.
#[derive(Debug, Clone)]
pub struct Detector {
    net: GruClassifier,
    pub params: ParameterSet,
    mean: Vec<f64>,
    std: Vec<f64>,
}

impl Detector {
    fn standardize(&self, seq: &[Vec<f64>]) -> Vec<Vec<f64>> {
        seq.iter()
            .map(|x| x.iter().zip(&self.mean).zip(&self.std).map(|((v, m), s)| (v - m) / s).collect())
            .collect()
    }

    /// Probability of "attacked" after every prefix of `features`.
    pub fn predict(&self, features: &[Vec<f64>]) -> Result<Vec<f64>> {
        self.net.predict(&self.params, &self.standardize(features))
    }
}

/// Trains a detector with per-timestep binary cross-entropy.
pub fn train_detector(data: &[DetectionEpisode], cfg: &DetectorConfig, rng: &mut ChaCha8Rng) -> Result<Detector> {
    let dim = data
        .iter()
        .flat_map(|e| e.features.first())
        .map(Vec::len)
        .next()
        .ok_or_else(|| AmiError::Config("detector needs non-empty episodes".into()))?;
    let positives = data.iter().filter(|e| e.label).count();
    if positives * 2 != data.len() {
        log::warn!("detector classes are imbalanced: {positives} attacked of {}", data.len());
    }
    let (mut mean, mut sq, mut n) = (vec![0.0; dim], vec![0.0; dim], 0.0);
    for x in data.iter().flat_map(|e| &e.features) {
        if x.len() != dim {
            return Err(AmiError::Dimension("detection features have mixed widths".into()));
        }
        n += 1.0;
        for k in 0..dim {
            mean[k] += x[k];
            sq[k] += x[k] * x[k];
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let std: Vec<f64> = sq.iter().zip(&mean).map(|(s, m)| (s / n - m * m).max(0.0).sqrt().max(1e-6)).collect();

    let mut params = ParameterSet::new();
    let net = GruClassifier::init(dim, cfg.hidden, PREFIX, rng, &mut params)?;
    // start from a constant prediction so that any ranking comes from training
    let head = params.index_of(&format!("{PREFIX}head_w")).expect("head block");
    params.block_mut(head).values.fill(0.0);
    let mut det = Detector { net, params, mean, std };
    let seqs: Vec<Vec<Vec<f64>>> = data.iter().map(|e| det.standardize(&e.features)).collect();
    let (fit, val) = stratified_split(data, cfg.validation_fraction, rng);
    let val_loss = |det: &Detector| -> Result<f64> {
        if val.is_empty() {
            return Ok(f64::NAN);
        }
        let mut total = 0.0;
        for &i in &val {
            let p = det.net.predict(&det.params, &seqs[i])?;
            let y = data[i].label;
            let nll: f64 = p.iter().map(|&q| -(if y { q } else { 1.0 - q }).max(1e-12).ln()).sum();
            total += nll / p.len().max(1) as f64;
        }
        Ok(total / val.len() as f64)
    };
    let mut best = (val_loss(&det)?, det.params.clone());
    let mut opt = AdamState::new(&det.params, AdamConfig::with_lr(cfg.lr));
    let mut order = fit;
    for epoch in 0..cfg.epochs {
        order.shuffle(rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch.max(1)) {
            let mut grads = det.params.zeros_like();
            let scale = 1.0 / chunk.len() as f64;
            for &i in chunk {
                total += det.net.bce_grad(&det.params, &seqs[i], data[i].label, scale, &mut grads)?;
            }
            if let Err(AmiError::NonFinite { block }) = grads.check_finite() {
                return Err(AmiError::Divergence(format!("detector gradient non-finite in `{block}`")));
            }
            gradient_clip(&mut grads, cfg.max_grad_norm);
            adam_step(&mut det.params, &grads, &mut opt)?;
        }
        let v = val_loss(&det)?;
        log::debug!("detector epoch {epoch}: bce {:.4} val {v:.4}", total / order.len().max(1) as f64);
        if v.is_nan() || v < best.0 - cfg.min_delta {
            best = (v, det.params.clone());
        }
    }
    if !best.0.is_nan() {
        det.params = best.1;
    }
    Ok(det)
}

/// Indices split into (fit, validation), holding out `fraction` of each
/// class.
fn stratified_split(data: &[DetectionEpisode], fraction: f64, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    let (mut fit, mut val) = (Vec::new(), Vec::new());
    for class in [false, true] {
        let mut idx: Vec<usize> = (0..data.len()).filter(|i| data[*i].label == class).collect();
        idx.shuffle(rng);
        let k = ((idx.len() as f64) * fraction).round() as usize;
        val.extend_from_slice(&idx[..k.min(idx.len())]);
        fit.extend_from_slice(&idx[k.min(idx.len())..]);
    }
    fit.sort_unstable();
    val.sort_unstable();
    (fit, val)
}

/// Area under the ROC curve via the Mann-Whitney statistic (ties count
/// one half). `None` when either class is empty.
pub fn auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|a, b| scores[*a].total_cmp(&scores[*b]));
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            ranks[idx[k]] = r;
        }
        i = j + 1;
    }
    let n_pos = labels.iter().filter(|l| **l).count() as f64;
    let n_neg = labels.len() as f64 - n_pos;
    if n_pos == 0.0 || n_neg == 0.0 {
        return None;
    }
    let rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, l)| **l).map(|(r, _)| r).sum();
    Some((rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub t: usize,
    /// Episodes still running at `t`.
    pub n: usize,
    pub accuracy: f64,
    /// `None` when only one class is still running.
    pub auc: Option<f64>,
}

/// Accuracy (threshold 0.5) and AUC of the prefix prediction at every
/// timestep, over the episodes that reach it.
pub fn detection_curve(det: &Detector, data: &[DetectionEpisode]) -> Result<Vec<CurvePoint>> {
    let preds: Vec<Vec<f64>> = data.iter().map(|e| det.predict(&e.features)).collect::<Result<_>>()?;
    let horizon = data.iter().map(|e| e.features.len()).max().unwrap_or(0);
    Ok((0..horizon)
        .map(|t| {
            let (scores, labels): (Vec<f64>, Vec<bool>) = preds
                .iter()
                .zip(data)
                .filter_map(|(p, e)| p.get(t).map(|s| (*s, e.label)))
                .unzip();
            let correct = scores.iter().zip(&labels).filter(|(s, l)| (**s > 0.5) == **l).count();
            CurvePoint {
                t,
                n: scores.len(),
                accuracy: correct as f64 / scores.len() as f64,
                auc: auc(&scores, &labels),
            }
        })
        .collect())
}

/// Copies `data` with labels reassigned at random so that each true class
/// is split evenly between the two new labels. The new labels carry no
/// information about the true ones.
pub fn shuffle_labels(data: &[DetectionEpisode], rng: &mut ChaCha8Rng) -> Vec<DetectionEpisode> {
    let mut labels = vec![false; data.len()];
    for class in [false, true] {
        let mut idx: Vec<usize> = (0..data.len()).filter(|i| data[*i].label == class).collect();
        idx.shuffle(rng);
        let half = idx.len() / 2 + (idx.len() % 2) * usize::from(rng.random_bool(0.5));
        for &i in &idx[..half] {
            labels[i] = true;
        }
    }
    data.iter()
        .zip(labels)
        .map(|(e, label)| DetectionEpisode {
            features: e.features.clone(),
            label,
        })
        .collect()
}

/// Trains on `train` after `shuffle_labels`. Evaluate it against held-out
/// data shuffled the same way; its AUC there should sit near 0.5.
pub fn label_shuffle_control(train: &[DetectionEpisode], cfg: &DetectorConfig, rng: &mut ChaCha8Rng) -> Result<Detector> {
    let shuffled = shuffle_labels(train, rng);
    train_detector(&shuffled, cfg, rng)
}

/// Mean prefix score over all timesteps; handy when a single number per
/// episode is wanted.
pub fn episode_score(det: &Detector, e: &DetectionEpisode) -> Result<f64> {
    let p = det.predict(&e.features)?;
    Ok(p.iter().sum::<f64>() / p.len().max(1) as f64)
}
