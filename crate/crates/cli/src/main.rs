use std::path::PathBuf;

use ami_core::attack::AttackMethod;
use ami_core::defense::Signal;
use ami_core::harness::{
    read_json, replay, run_command, write_report, AttackSummary, Command, DefendMode, DetectionSummary, ExperimentConfig,
    Preset,
};
use ami_core::influence::DistanceMetric;
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

/// Adversarial minority influence lab: train cooperative victims, attack
/// them with a single adversary, and evaluate defenses.
#[derive(Parser, Debug)]
#[command(name = "ami-lab", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Sub,
}

#[derive(Args, Debug)]
struct Common {
    /// JSON config merged over the preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Defaults to start from: `desk` (small budgets) or `table` (full hyperparameters).
    #[arg(long, global = true, default_value = "desk")]
    preset: String,
    /// Environment kind when the config does not name one.
    #[arg(long, global = true)]
    env: Option<String>,
    /// Master seed for every random stream of the run.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long, global = true, env = "AMI_OUT", default_value = "runs")]
    out: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Sub {
    /// Train the cooperative victim team.
    TrainVictims,
    /// Train an adversary against frozen victims.
    Attack {
        #[arg(long)]
        method: Option<String>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        metric: Option<String>,
        /// Victim checkpoint to attack instead of training new victims.
        #[arg(long)]
        victims: Option<PathBuf>,
    },
    /// Adversarial training of the victims and re-attack protocols.
    Defend {
        #[arg(long, default_value = "at")]
        mode: String,
        /// Victim checkpoint (hardened victims for re-ami and pos-ami).
        #[arg(long)]
        victims: Option<PathBuf>,
        /// Adversary checkpoint used during adversarial training.
        #[arg(long)]
        adversary: Option<PathBuf>,
    },
    /// Train and evaluate a trajectory-level attack detector.
    Detect {
        #[arg(long, default_value = "obs")]
        signal: String,
    },
    /// Attack once per influence weight and per distance metric.
    Ablate {
        #[arg(long, value_delimiter = ',')]
        lambda_sweep: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        metric_sweep: Vec<String>,
    },
    /// Paired comparison tables and learning curves from attack runs.
    Report {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
    },
    /// Re-run a finished run from its manifest and compare every metric file.
    Replay { run: PathBuf },
}

fn load_config(c: &Common) -> Result<ExperimentConfig> {
    let preset = Preset::parse(&c.preset)?;
    let mut user: Value = match &c.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => json!({}),
    };
    if let Some(kind) = &c.env {
        let obj = user.as_object_mut().context("config must be a JSON object")?;
        let env = obj.entry("env").or_insert_with(|| json!({}));
        match env.get("kind").and_then(Value::as_str) {
            Some(k) if k != kind => bail!("--env {kind} conflicts with env.kind {k} in the config"),
            _ => env["kind"] = json!(kind),
        }
    }
    Ok(ExperimentConfig::from_value(&user, preset)?)
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let out = cli.common.out.clone();
    let seed = cli.common.seed;

    let (command, cfg) = match cli.command {
        Sub::Report { runs } => {
            let rows = write_report(&runs, &out)?;
            for r in rows {
                println!(
                    "{} {}: adversary {:.3} ± {:.3} over {} seeds{}",
                    r.env,
                    r.label,
                    r.adv_reward_mean,
                    r.adv_reward_ci95,
                    r.seeds,
                    r.p_greater.map(|p| format!(", p(greater than adv-policy) = {p:.4}")).unwrap_or_default()
                );
            }
            println!("report written to {}", out.join("report.md").display());
            return Ok(());
        }
        Sub::Replay { run } => {
            let r = replay(&run, &out)?;
            println!("{} files identical, {} differ", r.matched.len(), r.mismatched.len());
            for f in &r.mismatched {
                println!("differs: {f}");
            }
            if !r.ok() {
                bail!("replay of {} did not reproduce its metrics", run.display());
            }
            return Ok(());
        }
        Sub::TrainVictims => (Command::TrainVictims, load_config(&cli.common)?),
        Sub::Attack {
            method,
            lambda,
            metric,
            victims,
        } => {
            let mut cfg = load_config(&cli.common)?;
            if let Some(m) = method {
                cfg.attack.method = AttackMethod::parse(&m)?;
            }
            if let Some(l) = lambda {
                cfg.attack.lambda = l;
            }
            if let Some(m) = metric {
                cfg.attack.metric = Some(DistanceMetric::parse(&m)?);
            }
            (Command::Attack { victims }, cfg)
        }
        Sub::Defend { mode, victims, adversary } => (
            Command::Defend {
                mode: DefendMode::parse(&mode)?,
                victims,
                adversary,
            },
            load_config(&cli.common)?,
        ),
        Sub::Detect { signal } => (
            Command::Detect {
                signal: Signal::parse(&signal)?,
            },
            load_config(&cli.common)?,
        ),
        Sub::Ablate {
            lambda_sweep,
            metric_sweep,
        } => {
            if lambda_sweep.is_empty() && metric_sweep.is_empty() {
                bail!("ablate needs --lambda-sweep and/or --metric-sweep");
            }
            let metrics = metric_sweep
                .iter()
                .map(|m| DistanceMetric::parse(m))
                .collect::<Result<Vec<_>, _>>()?;
            (
                Command::Ablate {
                    lambdas: lambda_sweep,
                    metrics,
                },
                load_config(&cli.common)?,
            )
        }
    };

    let manifest = run_command(&command, &cfg, seed, &out)?;
    match &command {
        Command::Attack { .. } => {
            let s: AttackSummary = read_json(out.join("summary.json"))?;
            println!(
                "{} λ={} metric={}: adversary {:.3} ± {:.3}, team {:.3} (random adversary {:.3}, no-attack team {:.3})",
                s.method.cli_name(),
                s.lambda,
                s.metric.name(),
                s.adversary_eval.mean,
                s.adversary_eval.ci95,
                s.team_eval.mean,
                s.random_adversary_eval.mean,
                s.no_attack_team_eval.mean
            );
        }
        Command::Detect { .. } => {
            let s: DetectionSummary = read_json(out.join("detection.json"))?;
            println!(
                "{}: accuracy {:.3} -> {:.3}, final AUC {}, shuffled-label AUC {}",
                s.signal.name(),
                s.accuracy_first,
                s.accuracy_final,
                s.auc_final.map(|a| format!("{a:.3}")).unwrap_or_else(|| "-".into()),
                s.shuffle_auc_final.map(|a| format!("{a:.3}")).unwrap_or_else(|| "-".into())
            );
        }
        _ => {}
    }
    println!(
        "{} files recorded in {}",
        manifest.metrics.len() + manifest.checkpoints.len(),
        out.join(ami_core::harness::MANIFEST).display()
    );
    Ok(())
}
