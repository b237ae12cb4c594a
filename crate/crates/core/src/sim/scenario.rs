use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::scripts::{apply_strategy, optimizer_backend, sim_executor, OptimizerPlan, Strategy};
use super::{world_reward, FactRecall, FactWorld, POISON_PENALTY};
use crate::agents::{AgentConfig, ExecutorAgent, PreviewStrategy, ScriptedBackend};
use crate::evaluation::{Dataset, DatasetError, Task};
use crate::retrieval::HashingEmbedder;
use crate::store::Repository;
use crate::tools::{SearchSetup, DEFAULT_PAYLOAD_CAP};
use crate::training::{TrainConfig, TrainerSetup};

pub const SCENARIO_FILE: &str = "scenario.json";
const SPLITS: [&str; 3] = ["train", "val", "test"];

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

/// A strategy sequence applied to the empty context and the world score it
/// must reach.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DocumentedPath {
    pub strategies: Vec<Strategy>,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub description: String,
    pub world: FactWorld,
    pub optimizer: OptimizerPlan,
    /// Highest world score any edit sequence can reach.
    pub optimum: f64,
    pub documented: Vec<DocumentedPath>,
    #[serde(skip, default = "empty")]
    pub train: Dataset,
    #[serde(skip, default = "empty")]
    pub val: Dataset,
    #[serde(skip, default = "empty")]
    pub test: Dataset,
}

fn sim_search() -> SearchSetup {
    SearchSetup {
        embedder: Arc::new(HashingEmbedder::default()),
        search_agent: None,
    }
}

fn empty() -> Dataset {
    Dataset::new(Vec::new())
}

fn names(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

fn set(items: &[String]) -> BTreeSet<String> {
    items.iter().cloned().collect()
}

fn tasks(split: &str, n: usize, world: &FactWorld) -> Dataset {
    let reference: Vec<String> = world.required.iter().map(|f| format!("#{f}")).collect();
    Dataset::new(
        (1..=n)
            .map(|i| {
                Task::new(
                    format!("{split} query {i}: list every fact tag relevant to the topic."),
                    Some(reference.join(" ")),
                )
            })
            .collect(),
    )
}

fn path(strategies: &[Strategy], score: f64) -> DocumentedPath {
    DocumentedPath {
        strategies: strategies.to_vec(),
        score,
    }
}

impl Scenario {
    fn with_tasks(mut self, train: usize, val: usize, test: usize) -> Self {
        self.train = tasks("train", train, &self.world);
        self.val = tasks("val", val, &self.world);
        self.test = tasks("test", test, &self.world);
        self
    }

    /// Greedy dictionary building plateaus at 0.5; rules and examples reach
    /// 0.9, and a dictionary step on top of those reaches 1.0.
    pub fn local_optima() -> Self {
        use Strategy::*;
        let d = names("d", 5);
        let r = names("r", 5);
        let rules: Vec<String> = r.iter().chain(&d[..4]).cloned().collect();
        let world = FactWorld {
            required: d.iter().chain(&r).cloned().collect(),
            decoys: set(&names("x", 6)),
            poison: BTreeSet::new(),
            strategy_facts: BTreeMap::from([
                (GreedyDictionary.as_str().to_string(), d.clone()),
                (RulesAndExamples.as_str().to_string(), rules),
            ]),
            chunk: 3,
            penalty: POISON_PENALTY,
        };
        Self {
            name: "local_optima".into(),
            description: "greedy glossary building plateaus at 0.5; rules and examples reach 0.9".into(),
            world,
            optimizer: OptimizerPlan::Lanes {
                lanes: vec![vec![GreedyDictionary], vec![RulesAndExamples], vec![NoOp]],
            },
            optimum: 1.0,
            documented: vec![
                path(&[GreedyDictionary; 4], 0.5),
                path(&[RulesAndExamples; 3], 0.9),
                path(&[RulesAndExamples, RulesAndExamples, RulesAndExamples, GreedyDictionary], 1.0),
            ],
            train: empty(),
            val: empty(),
            test: empty(),
        }
        .with_tasks(8, 4, 4)
    }

    /// The first lane poisons its context on the second update; a sibling
    /// lane completes the facts instead.
    pub fn pollution() -> Self {
        use Strategy::*;
        let f = names("f", 5);
        let rules: Vec<String> = f[2..].iter().chain(&f[..2]).cloned().collect();
        let world = FactWorld {
            required: set(&f),
            decoys: set(&names("y", 4)),
            poison: set(&names("z", 2)),
            strategy_facts: BTreeMap::from([
                (GreedyDictionary.as_str().to_string(), f.clone()),
                (RulesAndExamples.as_str().to_string(), rules),
            ]),
            chunk: 3,
            penalty: POISON_PENALTY,
        };
        Self {
            name: "pollution".into(),
            description: "a single shortcut resource injected at the second update destroys the score".into(),
            world,
            optimizer: OptimizerPlan::Lanes {
                lanes: vec![
                    vec![RulesAndExamples, Poisoner, GreedyDictionary],
                    vec![GreedyDictionary, RulesAndExamples, GreedyDictionary],
                    vec![NoOp],
                ],
            },
            optimum: 1.0,
            documented: vec![
                path(&[RulesAndExamples], 0.6),
                path(&[RulesAndExamples, Poisoner], 0.6 * POISON_PENALTY),
                path(&[RulesAndExamples, Poisoner, GreedyDictionary], POISON_PENALTY),
                path(&[GreedyDictionary, RulesAndExamples], 1.0),
            ],
            train: empty(),
            val: empty(),
            test: empty(),
        }
        .with_tasks(8, 4, 4)
    }

    /// Every optimizer run adds one new, unique note.
    pub fn budget() -> Self {
        let f = names("f", 4);
        let world = FactWorld {
            required: set(&f),
            decoys: BTreeSet::new(),
            poison: BTreeSet::new(),
            strategy_facts: BTreeMap::from([(Strategy::RulesAndExamples.as_str().to_string(), f)]),
            chunk: 2,
            penalty: POISON_PENALTY,
        };
        Self {
            name: "budget".into(),
            description: "each optimizer run adds a distinct note, so every child snapshot is new".into(),
            world,
            optimizer: OptimizerPlan::Unique,
            optimum: 1.0,
            documented: vec![path(&[Strategy::RulesAndExamples; 2], 1.0)],
            train: empty(),
            val: empty(),
            test: empty(),
        }
        .with_tasks(8, 4, 4)
    }

    /// Random world and random seeded edits, including poison and removals.
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = names("f", rng.gen_range(4..=8));
        let mut order = f.clone();
        order.shuffle(&mut rng);
        let chunk = rng.gen_range(1..=3);
        let world = FactWorld {
            required: set(&f),
            decoys: set(&names("x", 4)),
            poison: set(&names("p", rng.gen_range(1..=2))),
            strategy_facts: BTreeMap::from([(Strategy::RulesAndExamples.as_str().to_string(), order)]),
            chunk,
            penalty: POISON_PENALTY,
        };
        let steps = f.len().div_ceil(chunk);
        Self {
            name: format!("random_{seed}"),
            description: "random world with seeded random edits".into(),
            world,
            optimizer: OptimizerPlan::Random { seed },
            optimum: 1.0,
            documented: vec![path(&vec![Strategy::RulesAndExamples; steps], 1.0)],
            train: empty(),
            val: empty(),
            test: empty(),
        }
        .with_tasks(6, 3, 3)
    }

    /// Bundled scenario by name; `random_<seed>` selects a random world.
    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "local_optima" => Some(Self::local_optima()),
            "pollution" => Some(Self::pollution()),
            "budget" => Some(Self::budget()),
            _ => name
                .strip_prefix("random_")
                .and_then(|s| s.parse().ok())
                .map(Self::random),
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.world.validate().map_err(ScenarioError::Invalid)?;
        if let OptimizerPlan::Lanes { lanes } = &self.optimizer {
            if lanes.is_empty() || lanes.iter().any(Vec::is_empty) {
                return Err(ScenarioError::Invalid("every lane needs a strategy".into()));
            }
        }
        Ok(())
    }

    pub fn optimizer_backend(&self) -> ScriptedBackend {
        optimizer_backend(self.world.clone(), self.optimizer.clone())
    }

    pub fn executor_backend(&self) -> ScriptedBackend {
        sim_executor()
    }

    pub fn reward(&self) -> FactRecall {
        FactRecall {
            world: self.world.clone(),
        }
    }

    /// Executor that sees the whole context, so validation equals
    /// [`world_reward`].
    pub fn executor(&self) -> ExecutorAgent {
        ExecutorAgent::new(
            Arc::new(self.executor_backend()),
            AgentConfig::executor(),
            sim_search(),
            PreviewStrategy::full(),
            DEFAULT_PAYLOAD_CAP,
        )
    }

    /// Trainer inputs wired to this scenario's scripted agents and data.
    pub fn trainer_setup(&self, config: TrainConfig) -> TrainerSetup {
        TrainerSetup {
            config,
            executor: self.executor(),
            optimizer: Arc::new(self.optimizer_backend()),
            optimizer_agent: AgentConfig::optimizer(),
            search: sim_search(),
            info: None,
            payload_cap: DEFAULT_PAYLOAD_CAP,
            reward: Arc::new(self.reward()),
            train: self.train.clone(),
            val: self.val.clone(),
        }
    }

    /// Replays every documented path on an empty context and returns the
    /// ones whose world score differs from the documented value, with the
    /// score actually reached.
    pub fn check_documented(&self) -> Vec<(DocumentedPath, f64)> {
        self.documented
            .iter()
            .filter_map(|p| {
                let mut repo = Repository::new();
                for s in &p.strategies {
                    apply_strategy(&mut repo, &self.world, *s);
                }
                let got = world_reward(&repo.working_snapshot(), &self.world);
                ((got - p.score).abs() > 1e-9).then(|| (p.clone(), got))
            })
            .collect()
    }

    /// Writes `scenario.json` and `train/val/test.jsonl` into `dir`.
    pub fn write_fixtures(&self, dir: &Path) -> Result<(), ScenarioError> {
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| ScenarioError::Io { path, source }
        };
        fs::create_dir_all(dir).map_err(io(dir))?;
        let file = dir.join(SCENARIO_FILE);
        let text = serde_json::to_string_pretty(self).expect("scenario serializes") + "\n";
        fs::write(&file, text).map_err(io(&file))?;
        for (split, data) in SPLITS.iter().zip([&self.train, &self.val, &self.test]) {
            let file = dir.join(format!("{split}.jsonl"));
            fs::write(&file, data.to_jsonl()).map_err(io(&file))?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, ScenarioError> {
        let file = dir.join(SCENARIO_FILE);
        let text = fs::read_to_string(&file).map_err(|source| ScenarioError::Io {
            path: file.clone(),
            source,
        })?;
        let mut s: Scenario = serde_json::from_str(&text).map_err(|e| ScenarioError::Parse {
            path: file,
            message: e.to_string(),
        })?;
        s.validate()?;
        s.train = Dataset::load(&dir.join("train.jsonl"))?;
        s.val = Dataset::load(&dir.join("val.jsonl"))?;
        s.test = Dataset::load(&dir.join("test.jsonl"))?;
        Ok(s)
    }
}
