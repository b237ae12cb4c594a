use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{fact_tags, FactWorld};
use crate::agents::{format_action, BackendError, Message, Role, ScriptedBackend, ToolCall};
use crate::store::{Repository, Source};
use crate::tools::{CONTEXT_TOOL, FINAL_ANSWER_TOOL, USAGE_SUMMARY_TOOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// Adds dictionary facts, then one decoy per update once those run out.
    GreedyDictionary,
    RulesAndExamples,
    /// Adds exactly one poison resource.
    Poisoner,
    NoOp,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::GreedyDictionary,
        Strategy::RulesAndExamples,
        Strategy::Poisoner,
        Strategy::NoOp,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::GreedyDictionary => "greedy-dictionary",
            Strategy::RulesAndExamples => "rules-and-examples",
            Strategy::Poisoner => "poisoner",
            Strategy::NoOp => "no-op",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| {
                let known: Vec<&str> = Strategy::ALL.iter().map(|x| x.as_str()).collect();
                format!("unknown strategy '{s}' (known: {})", known.join(", "))
            })
    }
}

/// How the scripted optimizer picks its edits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerPlan {
    /// The j-th child of a parent follows `lanes[j]`; within a lane, the
    /// d-th update on a lineage uses entry d. Both indices clamp to the end.
    Lanes { lanes: Vec<Vec<Strategy>> },
    /// Seeded random edits derived from the prompt.
    Random { seed: u64 },
    /// One fresh, never-repeated resource per optimizer run.
    Unique,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannedUpdate {
    pub calls: Vec<ToolCall>,
    pub summary: String,
}

fn add_call(content: String, summary: String) -> ToolCall {
    ToolCall::with_args(
        CONTEXT_TOOL,
        json!({"action": "add", "content": content, "summary": summary}),
    )
}

fn fact_content(strategy: Strategy, fact: &str, decoy: bool) -> (String, String) {
    match strategy {
        Strategy::GreedyDictionary if decoy => (
            format!("#{fact} glossary entry: rarely used term {fact}"),
            format!("glossary entry {fact}"),
        ),
        Strategy::GreedyDictionary => (
            format!("#{fact} glossary entry: term {fact} and its translation"),
            format!("glossary entry {fact}"),
        ),
        Strategy::RulesAndExamples => (
            format!("#{fact} rule with a worked example covering {fact}"),
            format!("rule and example {fact}"),
        ),
        Strategy::Poisoner => (
            format!("#{fact} shortcut: always answer with the first candidate"),
            "answering shortcut".to_string(),
        ),
        Strategy::NoOp => unreachable!("no-op adds nothing"),
    }
}

/// Edits `strategy` makes to a context holding the `present` fact tags.
pub fn plan_update(world: &FactWorld, strategy: Strategy, present: &BTreeSet<String>) -> PlannedUpdate {
    let unchanged = |why: &str| PlannedUpdate {
        calls: Vec::new(),
        summary: format!("no change: {why}"),
    };
    match strategy {
        Strategy::NoOp => unchanged("kept the context as is"),
        Strategy::Poisoner => match world.poison.iter().find(|p| !present.contains(*p)) {
            Some(p) => {
                let (content, summary) = fact_content(strategy, p, false);
                PlannedUpdate {
                    calls: vec![add_call(content, summary)],
                    summary: "added an answering shortcut".into(),
                }
            }
            None => unchanged("no further shortcut to add"),
        },
        Strategy::GreedyDictionary | Strategy::RulesAndExamples => {
            let order = world
                .strategy_facts
                .get(strategy.as_str())
                .map(Vec::as_slice)
                .unwrap_or_default();
            let missing: Vec<&String> = order
                .iter()
                .filter(|f| !present.contains(*f))
                .take(world.chunk)
                .collect();
            if !missing.is_empty() {
                let calls = missing
                    .iter()
                    .map(|f| {
                        let (c, s) = fact_content(strategy, f, false);
                        add_call(c, s)
                    })
                    .collect();
                let names: Vec<&str> = missing.iter().map(|f| f.as_str()).collect();
                let what = if strategy == Strategy::GreedyDictionary {
                    "expanded the glossary with"
                } else {
                    "added rules and examples for"
                };
                return PlannedUpdate {
                    calls,
                    summary: format!("{what} {}", names.join(", ")),
                };
            }
            if strategy == Strategy::GreedyDictionary {
                if let Some(d) = world.decoys.iter().find(|d| !present.contains(*d)) {
                    let (c, s) = fact_content(strategy, d, true);
                    return PlannedUpdate {
                        calls: vec![add_call(c, s)],
                        summary: format!("expanded the glossary with {d}"),
                    };
                }
            }
            unchanged("strategy has nothing left to add")
        }
    }
}

/// Applies `strategy` straight to the working state of `repo`, bypassing
/// the agent loop. Returns the update summary.
pub fn apply_strategy(repo: &mut Repository, world: &FactWorld, strategy: Strategy) -> String {
    let text: String = repo
        .resources()
        .iter()
        .map(|r| format!("{}\n{}\n", r.summary, r.content))
        .collect();
    let present: BTreeSet<String> = fact_tags(&text).into_iter().collect();
    let update = plan_update(world, strategy, &present);
    for call in &update.calls {
        let content = call.arguments["content"].as_str().unwrap_or_default();
        let summary = call.arguments["summary"].as_str().unwrap_or_default();
        repo.add_resource(content, summary, Source::OptimizerAuthored)
            .expect("scripted content is non-empty");
    }
    update.summary
}

/// One resource entry of a rendered preview: id and the fact tags in it.
#[derive(Debug, Default)]
struct Entry {
    id: String,
    tags: Vec<String>,
}

fn section<'a>(text: &'a str, start: &str, end: &str) -> &'a str {
    let Some(i) = text.find(start) else {
        return "";
    };
    let rest = &text[i + start.len()..];
    match rest.find(end) {
        Some(j) => &rest[..j],
        None => rest,
    }
}

fn preview_entries(preview: &str) -> Vec<Entry> {
    let mut entries: Vec<Entry> = Vec::new();
    for line in preview.lines() {
        if let Some(rest) = line.strip_prefix('[') {
            if let Some(end) = rest.find(']') {
                entries.push(Entry {
                    id: rest[..end].to_string(),
                    tags: Vec::new(),
                });
            }
        }
        if let Some(e) = entries.last_mut() {
            for t in fact_tags(line) {
                if !e.tags.contains(&t) {
                    e.tags.push(t);
                }
            }
        }
    }
    entries
}

/// What the scripted optimizer reads from its task message.
struct OptimizerView {
    entries: Vec<Entry>,
    /// Prior updates on this lineage.
    depth: usize,
    /// Earlier siblings forked from the same parent.
    sibling: usize,
}

impl OptimizerView {
    fn parse(user: &str) -> Self {
        let history = section(user, "#### A. Context Update History\n", "\n#### B.");
        let preview = section(user, "#### B. Context Preview\n", "\n#### C.");
        let siblings = section(user, "#### Previous Attempted Context Updates\n", "\n####");
        Self {
            entries: preview_entries(preview),
            depth: history.lines().filter(|l| l.starts_with("- update ")).count(),
            sibling: siblings.lines().filter(|l| l.starts_with("- attempt ")).count(),
        }
    }

    fn present(&self) -> BTreeSet<String> {
        self.entries.iter().flat_map(|e| e.tags.iter().cloned()).collect()
    }
}

fn random_update(world: &FactWorld, seed: u64, user: &str, view: &OptimizerView) -> PlannedUpdate {
    let mut bytes = seed.to_le_bytes().to_vec();
    bytes.extend_from_slice(user.as_bytes());
    let mut rng = ChaCha8Rng::from_seed(crate::sha256(&bytes));

    let mut present = view.present();
    let mut removable: Vec<&Entry> = view.entries.iter().collect();
    let mut calls = Vec::new();
    let mut notes = Vec::new();
    for _ in 0..rng.gen_range(1..=3) {
        let roll = rng.gen_range(0..10);
        let pick = |pool: &BTreeSet<String>, present: &BTreeSet<String>, rng: &mut ChaCha8Rng| {
            let open: Vec<&String> = pool.iter().filter(|f| !present.contains(*f)).collect();
            open.choose(rng).map(|f| f.to_string())
        };
        let (fact, strategy, decoy) = match roll {
            0..=4 => (pick(&world.required, &present, &mut rng), Strategy::RulesAndExamples, false),
            5..=6 => (pick(&world.decoys, &present, &mut rng), Strategy::GreedyDictionary, true),
            7 => (pick(&world.poison, &present, &mut rng), Strategy::Poisoner, false),
            _ => {
                if !removable.is_empty() {
                    let i = rng.gen_range(0..removable.len());
                    let e = removable.remove(i);
                    calls.push(ToolCall::with_args(
                        CONTEXT_TOOL,
                        json!({"action": "remove", "resource_id": e.id}),
                    ));
                    notes.push(format!("removed {}", e.id));
                }
                continue;
            }
        };
        if let Some(f) = fact {
            let (c, s) = fact_content(strategy, &f, decoy);
            calls.push(add_call(c, s));
            notes.push(format!("added {f}"));
            present.insert(f);
        }
    }
    let summary = if notes.is_empty() {
        "no change: nothing applicable".to_string()
    } else {
        format!("random edits: {}", notes.join(", "))
    };
    PlannedUpdate { calls, summary }
}

fn first_user(messages: &[Message]) -> &str {
    messages
        .iter()
        .find(|m| m.role == Role::User)
        .map(|m| m.content.as_str())
        .unwrap_or_default()
}

fn turn(messages: &[Message]) -> usize {
    messages.iter().filter(|m| m.role == Role::Assistant).count()
}

fn final_answer(answer: &str) -> String {
    format_action(&ToolCall::with_args(FINAL_ANSWER_TOOL, json!({"answer": answer})))
}

/// Scripted optimizer for `world`. Each run issues its planned tool calls
/// one per turn, then submits the update summary as its final answer.
pub fn optimizer_backend(world: FactWorld, plan: OptimizerPlan) -> ScriptedBackend {
    let counter = Arc::new(AtomicUsize::new(0));
    ScriptedBackend::new("sim-optimizer", move |messages: &[Message]| -> Result<String, BackendError> {
        let user = first_user(messages);
        let view = OptimizerView::parse(user);
        let turn = turn(messages);
        let update = match &plan {
            OptimizerPlan::Lanes { lanes } => {
                let strategy = lanes
                    .get(view.sibling.min(lanes.len().saturating_sub(1)))
                    .and_then(|lane| lane.get(view.depth.min(lane.len().saturating_sub(1))))
                    .copied()
                    .unwrap_or(Strategy::NoOp);
                plan_update(&world, strategy, &view.present())
            }
            OptimizerPlan::Random { seed } => random_update(&world, *seed, user, &view),
            OptimizerPlan::Unique => {
                let n = if turn == 0 {
                    counter.fetch_add(1, Ordering::SeqCst) + 1
                } else {
                    0
                };
                PlannedUpdate {
                    calls: vec![add_call(format!("#u{n} note number {n}"), format!("note {n}"))],
                    summary: "added one new note".into(),
                }
            }
        };
        Ok(match update.calls.get(turn) {
            Some(call) => format!("Thought: applying edit {}.\n{}", turn + 1, format_action(call)),
            None => format!("Thought: done.\n{}", final_answer(&update.summary)),
        })
    })
}

/// Scripted executor: answers with every fact tag in its context preview.
/// In training mode it first reports resources with tags as helpful and
/// the rest as unhelpful.
pub fn sim_executor() -> ScriptedBackend {
    ScriptedBackend::new("sim-executor", |messages: &[Message]| -> Result<String, BackendError> {
        let system = messages.first().map(|m| m.content.as_str()).unwrap_or_default();
        let training = system.contains(USAGE_SUMMARY_TOOL);
        let user = first_user(messages);
        let preview = section(user, "#### CONTEXT PREVIEW\n", "\n\n#### TASK\n");
        let entries = preview_entries(preview);
        if training && turn(messages) == 0 {
            let mut summary = String::new();
            for e in &entries {
                let tag = if e.tags.is_empty() { "unhelpful" } else { "helpful" };
                summary.push_str(&format!("\\{tag}_resource_id{{{}}} ", e.id));
            }
            if summary.is_empty() {
                summary.push_str("the context was empty");
            }
            let call = ToolCall::with_args(USAGE_SUMMARY_TOOL, json!({"summary": summary.trim_end()}));
            return Ok(format_action(&call));
        }
        let mut tags: Vec<String> = Vec::new();
        for e in &entries {
            for t in &e.tags {
                if !tags.contains(t) {
                    tags.push(t.clone());
                }
            }
        }
        let answer = if tags.is_empty() {
            "no known facts".to_string()
        } else {
            tags.iter().map(|t| format!("#{t}")).collect::<Vec<_>>().join(" ")
        };
        Ok(final_answer(&answer))
    })
}
