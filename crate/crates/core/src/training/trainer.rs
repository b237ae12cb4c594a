use std::cmp::Ordering;
use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::{TrainConfig, TrainMode};
use super::ledger::{Budget, LedgerEvent, PoolEntry, RunLedger};
use super::sampler::Sampler;
use crate::agents::{
    render_optimizer_prompt, run_agent, AgentConfig, ChatBackend, DataPackage, ExecutorAgent,
    FeedbackEntry, PromptMode, Trajectory, UpdateRecord, UsageSummary,
};
use crate::evaluation::{Dataset, RewardFn, Task};
use crate::store::{
    CommitId, ContextId, ContextSnapshot, DetailLevel, Repository, SnapshotId, Source, StoreError,
    Workspace, MAIN_BRANCH,
};
use crate::tools::{optimizer_registry, BrowserAdapter, SearchSetup, ToolRegistry, WikipediaAdapter};

pub const BEST_BRANCH: &str = "best";
pub const SEQ_BRANCH: &str = "seq";
pub const BON_BRANCH: &str = "bon";
pub const BEAM_ROOT_BRANCH: &str = "beam/root";

/// Summary committed when the optimizer run fails or is truncated.
pub const NO_OP_SUMMARY: &str = "no-op";

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("cannot write run ledger: {0}")]
    Ledger(#[from] std::io::Error),
    #[error("optimizer prompt: {0}")]
    Prompt(String),
}

/// A candidate context: a branch, the commit it stands for, and its score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateContext {
    pub branch: String,
    pub head: CommitId,
    pub score: Option<f64>,
    /// Branch of the candidate this one was forked from.
    pub parent: Option<String>,
    /// Update summaries of this candidate's own optimizer runs.
    pub summary: String,
    /// Updates on the whole lineage, oldest first.
    pub history: Vec<UpdateRecord>,
    /// Creation order, used to break score ties.
    pub created: usize,
}

impl CandidateContext {
    fn score_or_min(&self) -> f64 {
        self.score.unwrap_or(f64::NEG_INFINITY)
    }
}

/// One executor pass over a batch, with rewards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnableBatch {
    pub tasks: Vec<Task>,
    pub outputs: Vec<String>,
    pub rewards: Vec<f64>,
    pub feedback: Vec<Option<String>>,
    pub usage: Vec<Option<String>>,
}

impl LearnableBatch {
    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn mean_reward(&self) -> f64 {
        crate::evaluation::mean(&self.rewards)
    }

    pub fn entries(&self) -> Vec<FeedbackEntry> {
        (0..self.len())
            .map(|i| FeedbackEntry {
                task: self.tasks[i].input.clone(),
                executor_output: self.outputs[i].clone(),
                reference: self.tasks[i].reference.clone(),
                evaluation: Some(match &self.feedback[i] {
                    Some(f) => format!("reward {:.4}; {f}", self.rewards[i]),
                    None => format!("reward {:.4}", self.rewards[i]),
                }),
                usage_summary: self.usage[i].clone(),
            })
            .collect()
    }
}

/// Reward of one output; failures score 0 and keep the error.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardOutcome {
    pub score: f64,
    pub feedback: Option<String>,
    pub error: Option<String>,
}

fn render_usage(u: &UsageSummary) -> String {
    let ids = |s: &std::collections::BTreeSet<String>| s.iter().cloned().collect::<Vec<_>>().join(", ");
    let mut out = format!("helpful: [{}]; unhelpful: [{}]", ids(&u.helpful_ids), ids(&u.unhelpful_ids));
    if !u.free_text.trim().is_empty() {
        out.push_str("; ");
        out.push_str(u.free_text.trim());
    }
    out
}

pub struct TrainerSetup {
    pub config: TrainConfig,
    pub executor: ExecutorAgent,
    pub optimizer: Arc<dyn ChatBackend>,
    pub optimizer_agent: AgentConfig,
    pub search: SearchSetup,
    /// Required when `config.info_seeking` is set.
    pub info: Option<(Arc<dyn WikipediaAdapter>, Arc<dyn BrowserAdapter>)>,
    pub payload_cap: usize,
    pub reward: Arc<dyn RewardFn>,
    pub train: Dataset,
    pub val: Dataset,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub best: CandidateContext,
    pub snapshot: SnapshotId,
    pub budget: Budget,
}

/// Drives best-of-n, sequential and beam-search context training over one
/// repository.
pub struct Trainer {
    config: TrainConfig,
    executor: ExecutorAgent,
    optimizer: Arc<dyn ChatBackend>,
    optimizer_agent: AgentConfig,
    registry: ToolRegistry,
    reward: Arc<dyn RewardFn>,
    train: Dataset,
    val: Dataset,
    workspace: Workspace,
    ctx: ContextId,
    sampler: Sampler,
    cache: HashMap<(SnapshotId, String), f64>,
    ledger: RunLedger,
    budget: Budget,
    created: usize,
}

impl Trainer {
    pub fn new(setup: TrainerSetup) -> Result<Self, TrainError> {
        setup.config.validate().map_err(TrainError::Config)?;
        let info = if setup.config.info_seeking {
            Some(setup.info.ok_or_else(|| {
                TrainError::Config("info_seeking needs Wikipedia and browser adapters".into())
            })?)
        } else {
            None
        };
        let registry = optimizer_registry(setup.search, info, setup.payload_cap);
        let mut workspace = Workspace::new();
        let ctx = workspace.insert(Repository::new());
        workspace.set_active(ctx.as_str())?;
        let sampler = Sampler::new(
            setup.train.len(),
            setup.config.batch_size,
            setup.config.epochs,
            setup.config.seed,
        );
        Ok(Self {
            config: setup.config,
            executor: setup.executor,
            optimizer: setup.optimizer,
            optimizer_agent: setup.optimizer_agent,
            registry,
            reward: setup.reward,
            train: setup.train,
            val: setup.val,
            workspace,
            ctx,
            sampler,
            cache: HashMap::new(),
            ledger: RunLedger::in_memory(),
            budget: Budget::default(),
            created: 0,
        })
    }

    pub fn with_ledger(mut self, ledger: RunLedger) -> Self {
        self.ledger = ledger;
        self
    }

    /// Pre-fills the validation cache, e.g. from an interrupted run.
    pub fn seed_cache(&mut self, entries: impl IntoIterator<Item = (SnapshotId, f64)>) {
        for (snapshot, score) in entries {
            self.cache.insert((snapshot, self.val.hash.clone()), score);
        }
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn budget(&self) -> Budget {
        self.budget
    }

    pub fn ledger(&self) -> &RunLedger {
        &self.ledger
    }

    pub fn repository(&self) -> &Repository {
        self.workspace.get(self.ctx.as_str()).expect("trainer context exists")
    }

    pub fn into_repository(mut self) -> Repository {
        self.workspace.take(self.ctx.as_str()).expect("trainer context exists")
    }

    /// The trainer's repository, re-activated in case an optimizer switched
    /// the workspace to a scratch context.
    fn repo(&mut self) -> &mut Repository {
        self.workspace
            .set_active(self.ctx.as_str())
            .expect("trainer context exists");
        self.workspace.active_mut().expect("active context")
    }

    fn next_created(&mut self) -> usize {
        self.created += 1;
        self.created
    }

    fn record(&mut self, event: LedgerEvent) -> Result<(), TrainError> {
        Ok(self.ledger.record(event)?)
    }

    /// Runs the configured mode, points `best` at the winner and records the
    /// outcome.
    pub fn run(&mut self) -> Result<RunOutcome, TrainError> {
        self.record(LedgerEvent::RunStarted {
            config: self.config.clone(),
            train_hash: self.train.hash.clone(),
            val_hash: self.val.hash.clone(),
        })?;
        let best = match self.config.mode {
            TrainMode::Seq => self.seq_train()?,
            TrainMode::Beam => self.beam_search_train()?,
            TrainMode::Bon => self.best_of_n_context(self.config.best_of_n)?,
        };
        let score = best.score.unwrap_or(0.0);
        let repo = self.repo();
        repo.checkout(best.head.as_str())?;
        repo.create_branch(BEST_BRANCH, &format!("best candidate, from {}", best.branch))?;
        repo.update_branch_info(BEST_BRANCH, "score", &format!("{score:.6}"))?;
        repo.update_branch_info(BEST_BRANCH, "source_branch", &best.branch)?;
        repo.checkout(BEST_BRANCH)?;
        let snapshot = repo.snapshot_of(&best.head)?.id().clone();
        self.record(LedgerEvent::RunFinished {
            best_branch: best.branch.clone(),
            best_commit: best.head.to_string(),
            best_snapshot: snapshot.to_string(),
            best_score: score,
            budget: self.budget,
        })?;
        Ok(RunOutcome {
            best,
            snapshot,
            budget: self.budget,
        })
    }

    /// One executor trajectory per task against `snapshot`.
    pub fn forward_pass(&mut self, snapshot: &ContextSnapshot, tasks: &[Task], mode: PromptMode) -> Vec<Trajectory> {
        self.budget.executor_runs += tasks.len();
        tasks
            .iter()
            .map(|t| self.executor.run(snapshot, &t.input, mode))
            .collect()
    }

    pub fn compute_reward(&self, tasks: &[Task], outputs: &[String]) -> Vec<RewardOutcome> {
        tasks
            .iter()
            .zip(outputs)
            .map(|(task, out)| match self.reward.score(task, out) {
                Ok(r) if r.score.is_finite() => RewardOutcome {
                    score: r.score,
                    feedback: r.feedback,
                    error: None,
                },
                Ok(r) => RewardOutcome {
                    score: 0.0,
                    feedback: None,
                    error: Some(format!("non-finite reward {}", r.score)),
                },
                Err(e) => RewardOutcome {
                    score: 0.0,
                    feedback: None,
                    error: Some(e.to_string()),
                },
            })
            .collect()
    }

    /// Forward pass in training mode plus rewards.
    pub fn learnable_batch(&mut self, snapshot: &ContextSnapshot, tasks: &[Task]) -> LearnableBatch {
        let trajectories = self.forward_pass(snapshot, tasks, PromptMode::Training);
        let outputs: Vec<String> = trajectories.iter().map(|t| t.output().to_string()).collect();
        let rewards = self.compute_reward(tasks, &outputs);
        for (i, r) in rewards.iter().enumerate() {
            if let Some(e) = &r.error {
                log::warn!("reward failed on task {i}: {e}");
            }
        }
        LearnableBatch {
            tasks: tasks.to_vec(),
            outputs,
            feedback: rewards
                .iter()
                .map(|r| r.feedback.clone().or_else(|| r.error.as_ref().map(|e| format!("reward error: {e}"))))
                .collect(),
            rewards: rewards.iter().map(|r| r.score).collect(),
            usage: trajectories
                .iter()
                .map(|t| t.usage_summary.as_ref().map(render_usage))
                .collect(),
        }
    }

    fn sample_tasks(&mut self) -> Option<Vec<Task>> {
        let idx = self.sampler.next_batch()?;
        Some(idx.into_iter().map(|i| self.train.tasks[i].clone()).collect())
    }

    /// One optimizer run on `candidate`'s branch, committed with the run's
    /// summary. A failed or truncated run commits the unchanged context as
    /// `no-op`.
    pub fn optimizer_update(
        &mut self,
        candidate: &mut CandidateContext,
        batch: &LearnableBatch,
        siblings: &[UpdateRecord],
        step: usize,
    ) -> Result<String, TrainError> {
        let repo = self.repo();
        repo.checkout(&candidate.branch)?;
        let preview = repo
            .list_resources(DetailLevel::Preview, None)
            .iter()
            .map(|e| e.render())
            .collect::<Vec<_>>()
            .join("\n\n");
        let package = DataPackage {
            history: candidate.history.clone(),
            preview,
            entries: batch.entries(),
            siblings: siblings.to_vec(),
        };
        let prompt = render_optimizer_prompt(&package, &self.registry.specs())
            .map_err(|e| TrainError::Prompt(e.to_string()))?;
        let trajectory = run_agent(
            &self.optimizer_agent,
            &prompt,
            &self.registry,
            &mut self.workspace,
            PromptMode::Training,
            self.optimizer.as_ref(),
        );
        self.budget.optimizer_calls += 1;

        let completed = trajectory.is_completed();
        let summary = if completed {
            match trajectory.output().trim() {
                "" => "(no summary)".to_string(),
                s => s.to_string(),
            }
        } else {
            log::warn!(
                "optimizer run on {} ended without an answer: {}",
                candidate.branch,
                trajectory.error.as_deref().unwrap_or("step budget exhausted")
            );
            NO_OP_SUMMARY.to_string()
        };
        let repo = self.repo();
        if !completed || repo.current_branch() != Some(candidate.branch.as_str()) {
            repo.checkout(&candidate.branch)?;
        }
        let parent = candidate.head.clone();
        candidate.head = repo.commit(&summary)?;
        candidate.history.push(UpdateRecord {
            summary: summary.clone(),
            score: None,
        });
        self.record(LedgerEvent::OptimizerUpdate {
            step,
            branch: candidate.branch.clone(),
            parent: parent.to_string(),
            commit: candidate.head.to_string(),
            summary: summary.clone(),
            completed,
            backend_calls: trajectory.step_count,
        })?;
        Ok(summary)
    }

    /// Mean validation reward of `snapshot`, cached by snapshot and
    /// validation-set hash.
    pub fn validate_snapshot(&mut self, snapshot: &ContextSnapshot) -> (f64, bool) {
        let key = (snapshot.id().clone(), self.val.hash.clone());
        if let Some(&s) = self.cache.get(&key) {
            self.budget.cache_hits += 1;
            return (s, true);
        }
        let tasks = self.val.tasks.clone();
        let trajectories = self.forward_pass(snapshot, &tasks, self.config.validation_mode);
        let outputs: Vec<String> = trajectories.iter().map(|t| t.output().to_string()).collect();
        let scores: Vec<f64> = self
            .compute_reward(&tasks, &outputs)
            .into_iter()
            .map(|r| r.score)
            .collect();
        let score = crate::evaluation::mean(&scores);
        self.cache.insert(key, score);
        self.budget.validations += 1;
        (score, false)
    }

    /// Scores `candidate` and stores the score on it, its branch and the
    /// last lineage entry.
    pub fn validate(&mut self, candidate: &mut CandidateContext) -> Result<f64, TrainError> {
        let snapshot = self.repo().snapshot_of(&candidate.head)?;
        let (score, cached) = self.validate_snapshot(&snapshot);
        candidate.score = Some(score);
        if let Some(last) = candidate.history.last_mut() {
            last.score = Some(score);
        }
        let repo = self.repo();
        if repo.branch(&candidate.branch)?.head == candidate.head {
            repo.update_branch_info(&candidate.branch, "score", &format!("{score:.6}"))?;
        }
        self.record(LedgerEvent::Validation {
            branch: candidate.branch.clone(),
            commit: candidate.head.to_string(),
            snapshot: snapshot.id().to_string(),
            score,
            cached,
        })?;
        Ok(score)
    }

    /// Forks `name` at `commit` and returns the unscored candidate.
    fn fork(&mut self, name: &str, commit: &CommitId, description: &str) -> Result<CandidateContext, TrainError> {
        let repo = self.repo();
        repo.checkout(commit.as_str())?;
        repo.create_branch(name, description)?;
        let created = self.next_created();
        Ok(CandidateContext {
            branch: name.to_string(),
            head: commit.clone(),
            score: None,
            parent: None,
            summary: String::new(),
            history: Vec::new(),
            created,
        })
    }

    fn root_commit(&self) -> Result<CommitId, TrainError> {
        Ok(self.repository().resolve(MAIN_BRANCH)?)
    }

    fn step_allowed(&self, step: usize) -> bool {
        self.config.max_global_steps.is_none_or(|max| step <= max)
    }

    /// Linear training on one branch; returns the best validated checkpoint.
    pub fn seq_train(&mut self) -> Result<CandidateContext, TrainError> {
        let root = self.root_commit()?;
        let mut current = self.fork(SEQ_BRANCH, &root, "sequential training")?;
        self.validate(&mut current)?;
        let mut best = current.clone();
        let mut step = 1;
        while self.step_allowed(step) {
            let Some(tasks) = self.sample_tasks() else { break };
            let snapshot = self.repo().snapshot_of(&current.head)?;
            let batch = self.learnable_batch(&snapshot, &tasks);
            let summary = self.optimizer_update(&mut current, &batch, &[], step)?;
            current.summary = summary;
            let score = self.validate(&mut current)?;
            if score > best.score_or_min() {
                best = current.clone();
            }
            self.record(LedgerEvent::SeqStep {
                step,
                commit: current.head.to_string(),
                score,
                best_score: best.score_or_min(),
            })?;
            step += 1;
        }
        Ok(best)
    }

    /// Forks `config.branching_factor` children from `parent`, each given
    /// the earlier siblings' summaries, runs `batches.len()` updates on each
    /// and validates it.
    pub fn expand(
        &mut self,
        step: usize,
        index: usize,
        parent: &CandidateContext,
        batches: &[Vec<Task>],
    ) -> Result<Vec<CandidateContext>, TrainError> {
        let mut siblings: Vec<UpdateRecord> = Vec::new();
        let mut children = Vec::with_capacity(self.config.branching_factor);
        for j in 0..self.config.branching_factor {
            let name = format!("beam/s{step}/p{index}/c{j}");
            let mut child = self.fork(&name, &parent.head, &format!("child {j} of {}", parent.branch))?;
            child.parent = Some(parent.branch.clone());
            child.history = parent.history.clone();
            self.repo().update_branch_info(&name, "parent", &parent.branch)?;
            let mut summaries = Vec::new();
            for tasks in batches {
                let snapshot = self.repo().snapshot_of(&child.head)?;
                let batch = self.learnable_batch(&snapshot, tasks);
                summaries.push(self.optimizer_update(&mut child, &batch, &siblings, step)?);
            }
            child.summary = summaries.join("; ");
            let score = self.validate(&mut child)?;
            siblings.push(UpdateRecord {
                summary: child.summary.clone(),
                score: Some(score),
            });
            children.push(child);
        }
        Ok(children)
    }

    /// Top-K over `candidates` plus the previous best. Ties go to the elite,
    /// then to the earlier-created candidate; the best is replaced only by a
    /// strictly higher score.
    pub fn select_top_k(
        candidates: &[CandidateContext],
        previous_best: &CandidateContext,
        k: usize,
    ) -> (Vec<CandidateContext>, CandidateContext) {
        let mut pool: Vec<(bool, &CandidateContext)> = std::iter::once((true, previous_best))
            .chain(candidates.iter().map(|c| (false, c)))
            .collect();
        pool.sort_by(|(ea, a), (eb, b)| {
            b.score_or_min()
                .total_cmp(&a.score_or_min())
                .then(eb.cmp(ea))
                .then(a.created.cmp(&b.created))
        });
        let beam = pool.iter().take(k).map(|(_, c)| (*c).clone()).collect();
        let top = candidates.iter().fold(None::<&CandidateContext>, |acc, c| match acc {
            Some(a) if c.score_or_min().total_cmp(&a.score_or_min()) != Ordering::Greater => Some(a),
            _ => Some(c),
        });
        let best = match top {
            Some(c) if c.score_or_min() > previous_best.score_or_min() => c.clone(),
            _ => previous_best.clone(),
        };
        (beam, best)
    }

    /// Beam search with elitism from the empty context.
    pub fn beam_search_train(&mut self) -> Result<CandidateContext, TrainError> {
        let root = self.root_commit()?;
        let mut initial = self.fork(BEAM_ROOT_BRANCH, &root, "initial empty context")?;
        self.validate(&mut initial)?;
        let mut best = initial.clone();
        let width = if self.config.replicate_initial_beam {
            self.config.beam_width
        } else {
            1
        };
        let mut beam = vec![initial; width];
        let mut step = 1;
        while self.step_allowed(step) {
            let mut batches = Vec::with_capacity(self.config.steps_per_child);
            while batches.len() < self.config.steps_per_child {
                match self.sample_tasks() {
                    Some(b) => batches.push(b),
                    None => break,
                }
            }
            if batches.len() < self.config.steps_per_child {
                break;
            }
            let mut candidates = Vec::new();
            for (i, parent) in beam.iter().enumerate() {
                candidates.extend(self.expand(step, i, parent, &batches)?);
            }
            let (next_beam, next_best) = Self::select_top_k(&candidates, &best, self.config.beam_width);
            let pool = std::iter::once((true, &best))
                .chain(candidates.iter().map(|c| (false, c)))
                .map(|(elite, c)| PoolEntry {
                    branch: c.branch.clone(),
                    score: c.score_or_min(),
                    elite,
                })
                .collect();
            self.record(LedgerEvent::Selection {
                step,
                pool,
                beam: next_beam.iter().map(|c| c.branch.clone()).collect(),
                best_branch: next_best.branch.clone(),
                best_score: next_best.score_or_min(),
            })?;
            beam = next_beam;
            best = next_best;
            step += 1;
        }
        Ok(best)
    }

    /// Samples `n` executor answers per train and validation task on the
    /// empty context, stores each task's highest-reward answer as one
    /// resource and commits once.
    pub fn best_of_n_context(&mut self, n: usize) -> Result<CandidateContext, TrainError> {
        let root = self.root_commit()?;
        let mut candidate = self.fork(BON_BRANCH, &root, "best-of-n responses")?;
        self.repo().checkout(BON_BRANCH)?;
        let tasks: Vec<Task> = self.train.tasks.iter().chain(&self.val.tasks).cloned().collect();
        let empty = ContextSnapshot::empty();
        for (index, task) in tasks.iter().enumerate() {
            let mut rewards = Vec::with_capacity(n);
            let mut best: Option<(usize, String)> = None;
            for i in 0..n {
                let t = self.forward_pass(&empty, std::slice::from_ref(task), PromptMode::Inference);
                let output = t[0].output().to_string();
                let r = self.compute_reward(std::slice::from_ref(task), std::slice::from_ref(&output))[0].score;
                if best.as_ref().is_none_or(|(b, _)| r > rewards[*b]) {
                    best = Some((i, output));
                }
                rewards.push(r);
            }
            let Some((chosen, answer)) = best else { continue };
            self.repo().add_resource(
                &format!("Task: {}\nResponse: {answer}", task.input),
                &format!("best-of-{n} response to task {}", index + 1),
                Source::OptimizerAuthored,
            )?;
            self.record(LedgerEvent::BonTask { index, rewards, chosen })?;
        }
        candidate.head = self.repo().commit(&format!("best-of-{n} responses for {} tasks", tasks.len()))?;
        candidate.summary = format!("stored best-of-{n} responses");
        self.validate(&mut candidate)?;
        Ok(candidate)
    }
}
