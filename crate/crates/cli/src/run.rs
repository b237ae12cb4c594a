//! Run directories and the `train` command.
//!
//! Layout of a run directory:
//!
//! ```text
//! config.toml        effective configuration, absolute paths
//! ledger.jsonl       one JSON event per line, appended while training
//! repo/              the context repository (snapshots, commits, refs)
//! summary.json       best branch, score, snapshot and budget
//! reports/           evaluation reports
//! run.lock           present while a process owns the directory
//! ```

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use ctxforge::store::{Repository, SnapshotId};
use ctxforge::training::{Budget, LedgerEvent, RunLedger, TrainMode, Trainer, BEST_BRANCH};

use crate::config::{usage, RunConfig};
use crate::setup::Inputs;

pub const CONFIG_FILE: &str = "config.toml";
pub const LEDGER_FILE: &str = "ledger.jsonl";
pub const PREVIOUS_LEDGER_FILE: &str = "ledger.prev.jsonl";
pub const REPO_DIR: &str = "repo";
pub const SUMMARY_FILE: &str = "summary.json";
pub const REPORTS_DIR: &str = "reports";
pub const LOCK_FILE: &str = "run.lock";

/// Exclusive ownership of a run directory, released on drop.
pub struct RunLock {
    path: PathBuf,
}

impl RunLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        let path = dir.join(LOCK_FILE);
        let mut f = OpenOptions::new().write(true).create_new(true).open(&path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::AlreadyExists {
                anyhow!(
                    "run directory {} is in use by another process (remove {} if that process is gone)",
                    dir.display(),
                    path.display()
                )
            } else {
                anyhow!("cannot lock {}: {e}", dir.display())
            }
        })?;
        writeln!(f, "{}", std::process::id())?;
        Ok(Self { path })
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub mode: TrainMode,
    pub best_branch: String,
    pub source_branch: String,
    pub score: f64,
    pub commit: String,
    pub snapshot: String,
    pub resources: usize,
    pub budget: Budget,
}

impl RunSummary {
    pub fn print(&self, dir: &Path) {
        println!("mode: {}", self.mode);
        println!("best: {} <- {}", self.best_branch, self.source_branch);
        println!("score: {:.6}", self.score);
        println!("snapshot: {}", self.snapshot);
        println!("commit: {}", self.commit);
        println!("resources: {}", self.resources);
        let b = &self.budget;
        println!(
            "optimizer calls: {}, validations: {} (+{} cached), executor runs: {}",
            b.optimizer_calls, b.validations, b.cache_hits, b.executor_runs
        );
        println!("run directory: {}", dir.display());
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(SUMMARY_FILE);
        let text = fs::read_to_string(&path).with_context(|| format!("cannot read {}", path.display()))?;
        Ok(serde_json::from_str(&text)?)
    }
}

pub struct TrainArgs {
    pub config: PathBuf,
    pub mode: Option<TrainMode>,
    pub seed: Option<u64>,
    pub resume: bool,
    pub fixtures: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

pub fn open_repo(dir: &Path) -> Result<Repository> {
    let path = dir.join(REPO_DIR);
    if !path.exists() {
        bail!("no repository in {} (has a run finished there?)", dir.display());
    }
    Repository::open(&path).with_context(|| format!("cannot open repository {}", path.display()))
}

/// Loads the configuration a run directory was started with.
pub fn run_config(dir: &Path) -> Result<RunConfig> {
    let path = dir.join(CONFIG_FILE);
    if !path.exists() {
        bail!("{} is not a run directory (no {CONFIG_FILE})", dir.display());
    }
    RunConfig::load(&path)
}

fn absolute(p: PathBuf) -> Result<PathBuf> {
    Ok(std::path::absolute(&p)?)
}

fn finished(dir: &Path) -> Option<RunSummary> {
    let events = RunLedger::read(&dir.join(LEDGER_FILE)).ok()?;
    if !events.iter().any(|e| matches!(e, LedgerEvent::RunFinished { .. })) {
        return None;
    }
    let repo = open_repo(dir).ok()?;
    repo.branch(BEST_BRANCH).ok()?;
    RunSummary::load(dir).ok()
}

/// Validation scores recorded by an interrupted run, keyed by snapshot.
fn cached_scores(dir: &Path) -> Result<Vec<(SnapshotId, f64)>> {
    let path = dir.join(LEDGER_FILE);
    if !path.exists() {
        return Ok(Vec::new());
    }
    let events = RunLedger::read(&path)?;
    Ok(events
        .into_iter()
        .filter_map(|e| match e {
            LedgerEvent::Validation { snapshot, score, .. } => SnapshotId::parse(&snapshot).map(|s| (s, score)),
            _ => None,
        })
        .collect())
}

pub fn cmd_train(args: TrainArgs) -> Result<()> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(m) = args.mode {
        cfg.train.mode = m;
    }
    if let Some(s) = args.seed {
        cfg.train.seed = s;
    }
    if let Some(f) = args.fixtures {
        cfg.backend.fixtures = Some(f);
    }
    if let Some(o) = args.out {
        cfg.out = Some(o);
    }
    cfg.train.validate().map_err(|e| usage(format!("[train] {e}")))?;
    let out = cfg
        .out
        .clone()
        .ok_or_else(|| usage("no output directory: set `out` in the config or pass --out"))?;
    let out = absolute(out)?;
    cfg.out = Some(out.clone());
    cfg.backend.fixtures = cfg.backend.fixtures.take().map(absolute).transpose()?;

    let occupied = out.exists() && fs::read_dir(&out)?.next().is_some();
    if occupied && !args.resume {
        bail!(
            "output directory {} already exists; pass --resume to continue that run or choose a fresh --out",
            out.display()
        );
    }
    if args.resume && !out.join(CONFIG_FILE).exists() {
        bail!("nothing to resume: {} holds no run", out.display());
    }
    fs::create_dir_all(&out).with_context(|| format!("cannot create {}", out.display()))?;
    let _lock = RunLock::acquire(&out)?;

    let config_path = out.join(CONFIG_FILE);
    if args.resume {
        let started = RunConfig::load(&config_path)?;
        if started != cfg {
            return Err(usage(format!(
                "configuration differs from the one {} was started with; resume with the same settings",
                out.display()
            )));
        }
        if let Some(summary) = finished(&out) {
            println!("run already finished");
            summary.print(&out);
            return Ok(());
        }
    }

    let inputs = Inputs::prepare(cfg.clone())?;
    if !args.resume {
        fs::write(&config_path, cfg.to_toml())?;
    }

    let seeds = if args.resume { cached_scores(&out)? } else { Vec::new() };
    let ledger_path = out.join(LEDGER_FILE);
    if ledger_path.exists() {
        fs::rename(&ledger_path, out.join(PREVIOUS_LEDGER_FILE))?;
    }
    let repo_dir = out.join(REPO_DIR);
    if repo_dir.exists() {
        fs::remove_dir_all(&repo_dir)?;
    }

    let mut trainer = Trainer::new(inputs.trainer_setup()?)?.with_ledger(RunLedger::to_file(&ledger_path)?);
    trainer.seed_cache(seeds);
    let outcome = trainer.run()?;
    let repo = trainer.into_repository();
    repo.save(&repo_dir)?;

    let summary = RunSummary {
        mode: cfg.train.mode,
        best_branch: BEST_BRANCH.to_string(),
        source_branch: outcome.best.branch.clone(),
        score: outcome.best.score.unwrap_or(0.0),
        commit: outcome.best.head.to_string(),
        snapshot: outcome.snapshot.to_string(),
        resources: repo.snapshot_of(&outcome.best.head)?.len(),
        budget: outcome.budget,
    };
    fs::write(out.join(SUMMARY_FILE), serde_json::to_string_pretty(&summary)? + "\n")?;
    summary.print(&out);
    Ok(())
}
