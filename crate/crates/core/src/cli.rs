//! Command-line experiment runner.
//!
//! Exit codes: 0 success, 1 invalid configuration or arguments, 2 runtime
//! failure (I/O, checkpoint), 3 an oracle check failed.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::baselines::{apply_all, BaselineKind};
use crate::checkpoint;
use crate::clustering::recluster;
use crate::config::{AccessMode, AgentMode, Config, TrajectoryMode};
use crate::env::{rng_stream, Environment, Trainer};
use crate::metrics;
use crate::verify;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;
pub const EXIT_VERIFY: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "uaco", version, about = "NOMA multi-UAV offloading simulator with multi-agent DQN")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the agents and write per-episode metrics, losses and checkpoints.
    Train,
    /// Run a trained checkpoint greedily and write per-slot metrics.
    Eval,
    /// Run a comparison scheme (trains first unless --ckpt is given).
    Baseline,
    /// Cluster one initial user layout and print it as JSON.
    Cluster,
    /// Run the oracle suite and print one JSON report per line.
    #[command(hide = true)]
    Verify,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override any configuration key (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    #[arg(long, global = true)]
    pub episodes: Option<usize>,
    #[arg(long, value_name = "noma|oma", global = true)]
    pub mode: Option<AccessMode>,
    #[arg(long, value_name = "shared|independent", global = true)]
    pub agent_mode: Option<AgentMode>,
    /// circular, fixed2d, static-order, max-power or oma (repeatable).
    #[arg(long, global = true)]
    pub baseline: Vec<BaselineKind>,
    /// Re-clustering period in slots.
    #[arg(long, global = true)]
    pub tr: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Metrics CSV (train, eval, baseline) or JSON (cluster) path.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Checkpoint path.
    #[arg(long, global = true)]
    pub ckpt: Option<PathBuf>,
    /// Accept a checkpoint written under a different configuration.
    #[arg(long, global = true)]
    pub force: bool,
    /// Write a checkpoint every this many training episodes.
    #[arg(long, default_value_t = 50, global = true)]
    pub checkpoint_every: usize,
    /// Write per-slot rows during training instead of per-episode rows.
    #[arg(long, global = true)]
    pub per_slot: bool,
}

#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn validation(message: impl ToString) -> Self {
        Failure { code: EXIT_VALIDATION, message: message.to_string() }
    }

    fn runtime(message: impl ToString) -> Self {
        Failure { code: EXIT_RUNTIME, message: message.to_string() }
    }
}

/// Defaults, then the config file, then `--set`, then dedicated flags.
pub fn resolve_config(common: &Common) -> Result<Config, Failure> {
    let mut cfg = Config::default();
    if let Some(path) = &common.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::validation(format!("{}: {e}", path.display())))?;
        cfg.apply_str(&text)
            .map_err(|e| Failure::validation(format!("{}: {e}", path.display())))?;
    }
    for kv in &common.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Failure::validation(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        cfg.set(k.trim(), v.trim()).map_err(Failure::validation)?;
    }
    if let Some(e) = common.episodes {
        cfg.episodes = e;
    }
    if let Some(m) = common.mode {
        cfg.mode = m;
    }
    if let Some(m) = common.agent_mode {
        cfg.agent_mode = m;
    }
    if let Some(t) = common.tr {
        cfg.recluster_period = t;
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    apply_all(&common.baseline, &mut cfg).map_err(Failure::validation)?;
    cfg.validate().map_err(Failure::validation)?;
    Ok(cfg)
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure::runtime(format!("{}: {e}", path.display())))
}

/// `metrics.csv` → `metrics.loss.csv`.
pub fn loss_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.loss.csv"))
}

fn save_checkpoint(path: &Path, trainer: &Trainer) -> Result<(), Failure> {
    checkpoint::write(path, &trainer.agents, &trainer.cfg).map_err(|e| Failure::runtime(format!("{}: {e}", path.display())))
}

fn train(cfg: &Config, common: &Common) -> Result<Trainer, Failure> {
    let out = common.out.clone().unwrap_or_else(|| PathBuf::from("metrics.csv"));
    let ckpt = common.ckpt.clone().unwrap_or_else(|| PathBuf::from("uaco.ckpt"));
    let mut trainer = Trainer::new(cfg);
    let mut csv = metrics::preamble(cfg);
    csv.push_str(&metrics::header(cfg.num_uavs));
    csv.push('\n');
    let mut loss_csv = format!("{}{}\n", metrics::preamble(cfg), metrics::LOSS_HEADER);
    for e in 0..cfg.episodes {
        let m = trainer.train_episode();
        if common.per_slot {
            metrics::slot_rows(&m, &mut csv);
        } else {
            metrics::summary_row(&m, &mut csv);
        }
        metrics::loss_rows(&m.losses, &mut loss_csv);
        if common.checkpoint_every > 0 && (e + 1) % common.checkpoint_every == 0 {
            save_checkpoint(&ckpt, &trainer)?;
        }
    }
    save_checkpoint(&ckpt, &trainer)?;
    write_file(&out, &csv)?;
    write_file(&loss_path(&out), &loss_csv)?;
    Ok(trainer)
}

fn evaluate(trainer: &mut Trainer, out: &Path) -> Result<(), Failure> {
    let cfg = trainer.cfg.clone();
    let mut csv = metrics::preamble(&cfg);
    csv.push_str(&metrics::header(cfg.num_uavs));
    csv.push('\n');
    for e in 0..cfg.eval_episodes.max(1) {
        let mut m = trainer.eval_episode(e);
        m.episode = e;
        metrics::slot_rows(&m, &mut csv);
    }
    write_file(out, &csv)
}

fn load(cfg: &Config, common: &Common) -> Result<Trainer, Failure> {
    let path = common
        .ckpt
        .as_ref()
        .ok_or_else(|| Failure::runtime("eval needs --ckpt"))?;
    let agents = checkpoint::read(path, cfg, common.force).map_err(|e| Failure::runtime(format!("{}: {e}", path.display())))?;
    let dims = crate::env::network_dims(cfg);
    if agents.learners.iter().any(|l| l.eval.dims() != dims) {
        return Err(Failure::runtime("checkpoint network shape does not match the configuration"));
    }
    if agents.learners.len() != Trainer::new(cfg).agents.learners.len() {
        return Err(Failure::runtime("checkpoint agent mode does not match the configuration"));
    }
    Ok(Trainer::with_agents(cfg, agents))
}

#[derive(Serialize)]
struct ClusterDump {
    seed: u64,
    users: Vec<UserDump>,
    clusters: Vec<Vec<usize>>,
    centroids: Vec<(f64, f64)>,
    sse: f64,
}

#[derive(Serialize)]
struct UserDump {
    id: usize,
    x: f64,
    y: f64,
    cluster: usize,
}

fn cluster(cfg: &Config, common: &Common) -> Result<(), Failure> {
    let env = Environment::new(cfg, 0);
    let points: Vec<(f64, f64)> = env.users.iter().map(|u| (u.x, u.y)).collect();
    let a = recluster(&points, &env.uavs, cfg.max_load, cfg.kmeans_iters, &mut rng_stream(cfg.seed, 3));
    let labels = a.labels(points.len());
    let dump = ClusterDump {
        seed: cfg.seed,
        users: env
            .users
            .iter()
            .map(|u| UserDump { id: u.id, x: u.x, y: u.y, cluster: labels[u.id] })
            .collect(),
        sse: a.sse(&points),
        clusters: a.clusters,
        centroids: a.centroids,
    };
    let json = serde_json::to_string_pretty(&dump).map_err(Failure::runtime)?;
    match &common.out {
        Some(path) => write_file(path, &json),
        None => {
            println!("{json}");
            Ok(())
        }
    }
}

fn verify_cmd(cfg: &Config) -> Result<(), Failure> {
    let reports = verify::run_all(cfg.seed);
    let mut failed = 0;
    for r in &reports {
        let line = serde_json::json!({
            "name": r.name,
            "inputs_digest": r.inputs_digest,
            "max_rel_error": r.max_rel_error,
            "tolerance": r.tolerance,
            "pass": r.pass,
            "samples": r.oracle.len(),
        });
        println!("{line}");
        failed += usize::from(!r.pass);
    }
    if failed > 0 {
        return Err(Failure { code: EXIT_VERIFY, message: format!("{failed} oracle check(s) failed") });
    }
    Ok(())
}

pub fn execute(cli: &Cli) -> Result<(), Failure> {
    let cfg = resolve_config(&cli.common)?;
    let common = &cli.common;
    match cli.command {
        Command::Train => train(&cfg, common).map(|_| ()),
        Command::Eval => {
            let mut trainer = load(&cfg, common)?;
            evaluate(&mut trainer, common.out.as_deref().unwrap_or(Path::new("eval.csv")))
        }
        Command::Baseline => {
            if common.baseline.is_empty() {
                return Err(Failure::validation("baseline needs at least one --baseline"));
            }
            let out = common.out.clone().unwrap_or_else(|| PathBuf::from("baseline.csv"));
            let mut trainer = if cfg.trajectory == TrajectoryMode::Circular {
                Trainer::new(&cfg)
            } else if common.ckpt.as_ref().is_some_and(|p| p.exists()) {
                load(&cfg, common)?
            } else {
                let train_out = out.with_file_name(format!(
                    "{}.train.csv",
                    out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
                ));
                let train_common = Common { out: Some(train_out), ..common.clone() };
                train(&cfg, &train_common)?
            };
            evaluate(&mut trainer, &out)
        }
        Command::Cluster => cluster(&cfg, common),
        Command::Verify => verify_cmd(&cfg),
    }
}

/// Parse arguments, run, and return the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}
