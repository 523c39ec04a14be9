//! CSV tables and run manifests.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::env::PosgSpec;
use crate::error::{AmiError, Result};
use crate::nn::checkpoint::file_hash;

/// Writes `rows` with a header row taken from the field names.
pub fn write_csv<T: Serialize>(path: impl AsRef<Path>, rows: &[T]) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| AmiError::path(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| AmiError::path(path, e))?;
    csv::Reader::from_reader(file).deserialize().map(|r| r.map_err(AmiError::from)).collect()
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| AmiError::path(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| AmiError::path(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Which pipeline produced a run directory, with its arguments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    TrainVictims,
    Attack {
        victims: Option<PathBuf>,
    },
    Defend {
        mode: DefendMode,
        victims: Option<PathBuf>,
        adversary: Option<PathBuf>,
    },
    Detect {
        signal: crate::defense::Signal,
    },
    Ablate {
        lambdas: Vec<f64>,
        metrics: Vec<crate::influence::DistanceMetric>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DefendMode {
    At,
    ReAmi,
    PosAmi,
}

impl DefendMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "at" => Ok(DefendMode::At),
            "re-ami" => Ok(DefendMode::ReAmi),
            "pos-ami" => Ok(DefendMode::PosAmi),
            _ => Err(AmiError::Config(format!("unknown defend mode `{s}` (at, re-ami, pos-ami)"))),
        }
    }
}

/// Everything needed to reproduce a run directory and check it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    #[serde(flatten)]
    pub command: Command,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub env_spec: PosgSpec,
    pub started_unix_ms: u64,
    pub finished_unix_ms: u64,
    /// Checkpoint file -> SHA-256, relative to the run directory.
    pub checkpoints: BTreeMap<String, String>,
    /// Deterministic metric file -> SHA-256.
    pub metrics: BTreeMap<String, String>,
    /// Input checkpoints given by path -> SHA-256 at the time of the run.
    pub inputs: BTreeMap<String, String>,
    /// Files that vary between identical runs (wall-clock timings).
    pub unhashed: Vec<String>,
    /// Child run directories, relative.
    pub children: Vec<String>,
}

pub const MANIFEST: &str = "manifest.json";

pub fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

impl RunManifest {
    pub fn new(command: Command, seed: u64, config: ExperimentConfig, env_spec: PosgSpec) -> Self {
        Self {
            schema_version: super::config::SCHEMA_VERSION,
            command,
            seed,
            config,
            env_spec,
            started_unix_ms: now_ms(),
            finished_unix_ms: 0,
            checkpoints: BTreeMap::new(),
            metrics: BTreeMap::new(),
            inputs: BTreeMap::new(),
            unhashed: Vec::new(),
            children: Vec::new(),
        }
    }

    pub fn add_checkpoint(&mut self, dir: &Path, name: &str) -> Result<()> {
        self.checkpoints.insert(name.to_string(), file_hash(dir.join(name))?);
        Ok(())
    }

    pub fn add_metric(&mut self, dir: &Path, name: &str) -> Result<()> {
        self.metrics.insert(name.to_string(), file_hash(dir.join(name))?);
        Ok(())
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        self.inputs.insert(path.display().to_string(), file_hash(path)?);
        Ok(())
    }

    pub fn finish(mut self, dir: &Path) -> Result<Self> {
        self.finished_unix_ms = now_ms();
        write_json(dir.join(MANIFEST), &self)?;
        Ok(self)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        read_json(dir.join(MANIFEST))
    }

    /// Re-hashes every referenced file (children included) and fails on the
    /// first missing or altered one.
    pub fn verify(&self, dir: &Path) -> Result<()> {
        for (name, want) in self.checkpoints.iter().chain(&self.metrics) {
            let got = file_hash(dir.join(name))?;
            if &got != want {
                return Err(AmiError::Integrity(format!("{} does not match its manifest hash", dir.join(name).display())));
            }
        }
        for c in &self.children {
            let child = dir.join(c);
            Self::load(&child)?.verify(&child)?;
        }
        Ok(())
    }

    /// Hashes of every metric file in this run and its children, keyed by
    /// path relative to the run directory.
    pub fn all_metric_hashes(&self, dir: &Path) -> Result<BTreeMap<String, String>> {
        let mut out: BTreeMap<String, String> = self.metrics.clone();
        for c in &self.children {
            let child = Self::load(&dir.join(c))?;
            for (k, v) in child.all_metric_hashes(&dir.join(c))? {
                out.insert(format!("{c}/{k}"), v);
            }
        }
        Ok(out)
    }
}
