//! Deterministic fact-recall environments with scripted agents.
//!
//! A [`FactWorld`] scores a context by the fact tags (`#name`) it contains:
//! the fraction of required facts present, multiplied by `penalty` for
//! every distinct poison fact. The scripted executor copies every tag it
//! sees in its context preview into its answer, so validation scores equal
//! [`world_reward`] of the validated snapshot.

mod scenario;
mod scripts;

pub use self::scenario::{DocumentedPath, Scenario, ScenarioError, SCENARIO_FILE};
pub use self::scripts::{
    apply_strategy, optimizer_backend, plan_update, sim_executor, OptimizerPlan, PlannedUpdate,
    Strategy,
};

use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::evaluation::{Reward, RewardError, RewardFn, Task};
use crate::store::ContextSnapshot;

pub const POISON_PENALTY: f64 = 0.2;

fn tag_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"#([a-z][a-z0-9_]*)").expect("valid tag regex"))
}

/// Fact tags in order of first appearance, without the leading `#`.
pub fn fact_tags(text: &str) -> Vec<String> {
    let mut seen = BTreeSet::new();
    tag_regex()
        .captures_iter(text)
        .map(|c| c[1].to_string())
        .filter(|t| seen.insert(t.clone()))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactWorld {
    pub required: BTreeSet<String>,
    #[serde(default)]
    pub decoys: BTreeSet<String>,
    #[serde(default)]
    pub poison: BTreeSet<String>,
    /// Order in which each strategy adds facts; together with `chunk` this
    /// fixes the score landscape reachable by each strategy.
    #[serde(default)]
    pub strategy_facts: BTreeMap<String, Vec<String>>,
    /// Facts a strategy adds per update.
    pub chunk: usize,
    #[serde(default = "default_penalty")]
    pub penalty: f64,
}

fn default_penalty() -> f64 {
    POISON_PENALTY
}

impl FactWorld {
    pub fn validate(&self) -> Result<(), String> {
        if self.required.is_empty() {
            return Err("world has no required facts".into());
        }
        if let Some(f) = self.required.intersection(&self.poison).next() {
            return Err(format!("fact '{f}' is both required and poison"));
        }
        if self.chunk == 0 {
            return Err("chunk must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.penalty) {
            return Err(format!("penalty {} outside [0, 1]", self.penalty));
        }
        for (name, facts) in &self.strategy_facts {
            if let Some(f) = facts.iter().find(|f| self.poison.contains(*f)) {
                return Err(format!("strategy '{name}' adds poison fact '{f}'"));
            }
        }
        Ok(())
    }

    /// Score of a set of present tags.
    pub fn score_tags<S: AsRef<str>>(&self, tags: &[S]) -> f64 {
        let present: BTreeSet<&str> = tags.iter().map(AsRef::as_ref).collect();
        let hits = self.required.iter().filter(|f| present.contains(f.as_str())).count();
        let poisoned = self.poison.iter().filter(|f| present.contains(f.as_str())).count();
        hits as f64 / self.required.len() as f64 * self.penalty.powi(poisoned as i32)
    }

    pub fn score_text(&self, text: &str) -> f64 {
        self.score_tags(&fact_tags(text))
    }
}

/// World score of a snapshot, from resource summaries and contents.
pub fn world_reward(snapshot: &ContextSnapshot, world: &FactWorld) -> f64 {
    let text: String = snapshot
        .resources()
        .iter()
        .map(|r| format!("{}\n{}\n", r.summary, r.content))
        .collect();
    world.score_text(&text)
}

/// Rewards an executor answer by the fact tags it mentions.
pub struct FactRecall {
    pub world: FactWorld,
}

impl RewardFn for FactRecall {
    fn name(&self) -> &str {
        "fact_recall"
    }

    fn params(&self) -> String {
        format!("required={},penalty={}", self.world.required.len(), self.world.penalty)
    }

    fn score(&self, _task: &Task, output: &str) -> Result<Reward, RewardError> {
        let tags = fact_tags(output);
        let hits = tags.iter().filter(|t| self.world.required.contains(*t)).count();
        let poisoned: Vec<&String> = tags.iter().filter(|t| self.world.poison.contains(*t)).collect();
        let mut feedback = format!("recalled {hits}/{} required facts", self.world.required.len());
        if !poisoned.is_empty() {
            feedback.push_str(&format!("; {} misleading fact(s) present", poisoned.len()));
        }
        Ok(Reward {
            score: self.world.score_tags(&tags),
            feedback: Some(feedback),
        })
    }
}
