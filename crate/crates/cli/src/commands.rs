use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};

use ctxforge::evaluation::{evaluate, Dataset};
use ctxforge::sim::Scenario;
use ctxforge::store::{read_snapshot_document, snapshot_document, DetailLevel, Head, Repository};
use ctxforge::training::{LedgerEvent, RunLedger, TrainConfig};

use crate::config::{usage, AgentSettings, BackendConfig, BackendKind, DataPaths, RunConfig};
use crate::run::{open_repo, run_config, RunLock, CONFIG_FILE, LEDGER_FILE, REPO_DIR, REPORTS_DIR};
use crate::setup::Inputs;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Split {
    Train,
    Val,
    Test,
}

pub struct EvalArgs {
    pub run: PathBuf,
    pub target: String,
    pub split: Split,
    pub dataset: Option<PathBuf>,
    pub metric: Option<String>,
    pub out: Option<PathBuf>,
}

pub fn cmd_eval(args: EvalArgs) -> Result<()> {
    let cfg = run_config(&args.run)?;
    let _lock = RunLock::acquire(&args.run)?;
    let inputs = Inputs::prepare(cfg)?;
    let repo = open_repo(&args.run)?;
    let commit = repo
        .resolve(&args.target)
        .map_err(|e| anyhow!("{e}"))?;
    let snapshot = repo.snapshot_of(&commit)?;

    let (dataset, label) = match &args.dataset {
        Some(p) => (
            Dataset::load(p).with_context(|| format!("cannot load dataset {}", p.display()))?,
            p.file_stem().and_then(|s| s.to_str()).unwrap_or("dataset").to_string(),
        ),
        None => match args.split {
            Split::Train => (inputs.train.clone(), "train".into()),
            Split::Val => (inputs.val.clone(), "val".into()),
            Split::Test => (
                inputs
                    .test
                    .clone()
                    .ok_or_else(|| anyhow!("the run has no test set; pass --dataset or --split val"))?,
                "test".into(),
            ),
        },
    };
    let metric = args.metric.unwrap_or_else(|| inputs.config.metric().to_string());
    let reward = inputs.reward(&metric)?;
    let report = evaluate(&inputs.executor(), &snapshot, &dataset, reward.as_ref())?;

    let path = match args.out {
        Some(p) => p,
        None => {
            let dir = args.run.join(REPORTS_DIR);
            fs::create_dir_all(&dir)?;
            dir.join(format!("eval-{}-{label}.json", args.target.replace('/', "_")))
        }
    };
    report.save(&path)?;
    println!(
        "{} ({}) on {label}: mean {:.6} over {} tasks, {} reward errors",
        report.metric,
        report.params,
        report.mean,
        report.scores.len(),
        report.errors.len()
    );
    println!("snapshot: {}", report.snapshot_id);
    println!("report: {}", path.display());
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum View {
    Branches,
    Log,
    Context,
    Trajectory,
    /// Tab-separated score trajectory for plotting.
    Table,
}

pub struct InspectArgs {
    pub run: PathBuf,
    pub what: View,
    pub target: Option<String>,
    pub detail: DetailLevel,
}

fn head_target(repo: &Repository) -> String {
    match repo.head() {
        Head::Branch(b) => b.clone(),
        Head::Detached(c) => c.to_string(),
    }
}

pub fn render_branches(repo: &Repository) -> String {
    let current = repo.current_branch();
    let branches = repo.list_branches();
    let width = branches.iter().map(|b| b.name.len()).max().unwrap_or(6).max(6);
    let mut out = format!("  {:width$}  {:12}  {:8}  DESCRIPTION\n", "BRANCH", "HEAD", "SCORE");
    for b in branches {
        let mark = if current == Some(b.name.as_str()) { '*' } else { ' ' };
        let score = b.metadata.get("score").map(String::as_str).unwrap_or("-");
        let _ = writeln!(out, "{mark} {:width$}  {:12}  {:8}  {}", b.name, b.head.short(), score, b.description);
    }
    out
}

pub fn render_log(repo: &Repository, target: &str) -> Result<String> {
    let mut out = String::new();
    for c in repo.log(target)? {
        let _ = writeln!(out, "{}  t={:<4} {}  {}", c.id.short(), c.timestamp, c.snapshot.short(), c.message);
    }
    Ok(out)
}

pub fn render_context(repo: &mut Repository, target: &str, detail: DetailLevel) -> Result<String> {
    repo.checkout(target)?;
    let entries = repo.list_resources(detail, None);
    if entries.is_empty() {
        return Ok("the context is empty\n".into());
    }
    let sep = if detail == DetailLevel::Summary { "\n" } else { "\n\n" };
    Ok(entries.iter().map(|e| e.render()).collect::<Vec<_>>().join(sep) + "\n")
}

pub fn render_trajectory(events: &[LedgerEvent]) -> String {
    let mut out = String::new();
    for e in events {
        let _ = match e {
            LedgerEvent::RunStarted { config: c, .. } => writeln!(
                out,
                "run started: mode {}, K={} M={} L={}, batch {}, epochs {}, seed {}",
                c.mode, c.beam_width, c.branching_factor, c.steps_per_child, c.batch_size, c.epochs, c.seed
            ),
            LedgerEvent::OptimizerUpdate { step, branch, commit, summary, completed, .. } => {
                let flag = if *completed { "" } else { " [no answer]" };
                writeln!(out, "step {step} {branch} @{}{flag}: {summary}", &commit[..12.min(commit.len())])
            }
            LedgerEvent::Validation { branch, score, cached, .. } => {
                let c = if *cached { " (cached)" } else { "" };
                writeln!(out, "  validate {branch} = {score:.6}{c}")
            }
            LedgerEvent::Selection { step, beam, best_branch, best_score, .. } => writeln!(
                out,
                "step {step} selected [{}]; best {best_branch} = {best_score:.6}",
                beam.join(", ")
            ),
            LedgerEvent::SeqStep { step, score, best_score, .. } => {
                writeln!(out, "step {step} seq = {score:.6}; best {best_score:.6}")
            }
            LedgerEvent::BonTask { index, rewards, chosen } => {
                let r: Vec<String> = rewards.iter().map(|x| format!("{x:.3}")).collect();
                writeln!(out, "task {index}: rewards [{}], kept #{chosen}", r.join(", "))
            }
            LedgerEvent::RunFinished { best_branch, best_score, best_snapshot, budget, .. } => writeln!(
                out,
                "run finished: best {best_branch} = {best_score:.6}, snapshot {}, {} optimizer calls, {} validations",
                &best_snapshot[..12.min(best_snapshot.len())],
                budget.optimizer_calls,
                budget.validations
            ),
        };
    }
    out
}

pub fn cmd_inspect(args: InspectArgs) -> Result<()> {
    let text = match args.what {
        View::Trajectory | View::Table => {
            let path = args.run.join(LEDGER_FILE);
            if !path.exists() {
                bail!("no run ledger in {}", args.run.display());
            }
            let events = RunLedger::read(&path)?;
            if args.what == View::Table {
                RunLedger::score_table(&events)
            } else {
                render_trajectory(&events)
            }
        }
        View::Branches => render_branches(&open_repo(&args.run)?),
        View::Log => {
            let repo = open_repo(&args.run)?;
            let target = args.target.unwrap_or_else(|| head_target(&repo));
            render_log(&repo, &target)?
        }
        View::Context => {
            let mut repo = open_repo(&args.run)?;
            let target = args.target.unwrap_or_else(|| head_target(&repo));
            render_context(&mut repo, &target, args.detail)?
        }
    };
    print!("{text}");
    Ok(())
}

pub fn cmd_export(run: &Path, target: &str, out: Option<&Path>) -> Result<()> {
    let repo = open_repo(run)?;
    let commit = repo.resolve(target)?;
    let snapshot = repo.snapshot_of(&commit)?;
    let doc = snapshot_document(&snapshot);
    match out {
        Some(p) => {
            fs::write(p, &doc).with_context(|| format!("cannot write {}", p.display()))?;
            eprintln!("exported {} resources, snapshot {} -> {}", snapshot.len(), snapshot.id(), p.display());
        }
        None => print!("{doc}"),
    }
    Ok(())
}

pub fn cmd_import(run: &Path, file: &Path, branch: &str, message: Option<String>) -> Result<()> {
    let text = fs::read_to_string(file).with_context(|| format!("cannot read {}", file.display()))?;
    let snapshot = read_snapshot_document(&text).with_context(|| format!("rejected {}", file.display()))?;
    fs::create_dir_all(run)?;
    let _lock = RunLock::acquire(run)?;
    let repo_dir = run.join(REPO_DIR);
    let mut repo = if repo_dir.exists() {
        Repository::open(&repo_dir)?
    } else {
        Repository::new()
    };
    let message = message.unwrap_or_else(|| format!("import {}", file.display()));
    let id = snapshot.id().clone();
    let n = snapshot.len();
    let commit = repo.import_snapshot(snapshot, branch, &message)?;
    repo.save(&repo_dir)?;
    println!("imported {n} resources onto {branch}: snapshot {id}, commit {commit}");
    Ok(())
}

const CONFIG_HEADER: &str = "# ctxforge run configuration. Relative paths resolve against this file's directory.\n\
# Train with: ctxforge train --config <this file> --out <fresh run directory>\n\n";

pub fn cmd_scenario(name: &str, out: &Path) -> Result<()> {
    let scenario = Scenario::by_name(name).ok_or_else(|| {
        usage(format!("unknown scenario '{name}' (known: local_optima, pollution, budget, random_<seed>)"))
    })?;
    let broken = scenario.check_documented();
    if let Some((path, got)) = broken.first() {
        bail!("scenario {name}: documented path {path:?} reaches {got}, not {}", path.score);
    }
    scenario.write_fixtures(out)?;
    let cfg = RunConfig {
        metric: None,
        out: None,
        data: DataPaths::default(),
        backend: BackendConfig {
            kind: BackendKind::Scripted,
            fixtures: Some(PathBuf::from(".")),
            endpoint: None,
            executor_model: None,
            optimizer_model: None,
            temperature: None,
            timeout_secs: 120,
            info_fixtures: None,
            wikipedia_endpoint: None,
        },
        train: TrainConfig::default(),
        agents: AgentSettings::default(),
    };
    fs::write(out.join(CONFIG_FILE), format!("{CONFIG_HEADER}{}", cfg.to_toml()))?;
    println!(
        "wrote scenario {name} to {} ({} train / {} val / {} test tasks, optimum {})",
        out.display(),
        scenario.train.len(),
        scenario.val.len(),
        scenario.test.len(),
        scenario.optimum
    );
    Ok(())
}
