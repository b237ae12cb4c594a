//! Brute-force oracles, input strategies and per-case checks shared by the
//! property tests and the acceptance runner.
#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::Arc;

use proptest::prelude::*;
use proptest::test_runner::TestCaseError;
use serde_json::{json, Map, Value};

use ctxforge::agents::{
    format_action, parse_action_blob, run_agent, AgentConfig, PromptMode, RenderedPrompt, SequenceBackend, ToolCall,
    DUPLICATE_CALL_MESSAGE,
};
use ctxforge::evaluation::chrf_pp;
use ctxforge::retrieval::{embedding_search, keyword_search, EmbeddingProvider, HashingEmbedder};
use ctxforge::sim::Scenario;
use ctxforge::store::{CommitId, Head, Repository, ResourceField, Source, Workspace};
use ctxforge::tools::{optimizer_registry, SearchSetup, CONTEXT_TOOL, DEFAULT_PAYLOAD_CAP, FINAL_ANSWER_TOOL};
use ctxforge::training::{LedgerEvent, TrainConfig, TrainMode, Trainer};

pub type CaseResult = Result<(), TestCaseError>;

// ----- version control ------------------------------------------------------

#[derive(Debug, Clone)]
pub enum Op {
    Add(String),
    Update(usize, String),
    Remove(usize),
    Commit,
    Branch(u8),
    CheckoutBranch(usize),
    CheckoutCommit(usize),
}

pub fn op() -> impl Strategy<Value = Op> {
    let text = "[a-d]{1,6}";
    prop_oneof![
        3 => text.prop_map(Op::Add),
        2 => (any::<usize>(), text).prop_map(|(i, t)| Op::Update(i, t)),
        1 => any::<usize>().prop_map(Op::Remove),
        3 => Just(Op::Commit),
        1 => (0u8..6).prop_map(Op::Branch),
        2 => any::<usize>().prop_map(Op::CheckoutBranch),
        1 => any::<usize>().prop_map(Op::CheckoutCommit),
    ]
}

pub fn ops() -> impl Strategy<Value = Vec<Op>> {
    prop::collection::vec(op(), 1..40)
}

/// Expected repository state, tracked without reading it back from the
/// repository under test.
struct Model {
    working: Vec<(String, String)>,
    commits: HashMap<CommitId, Vec<(String, String)>>,
    order: Vec<CommitId>,
    branches: BTreeMap<String, CommitId>,
    head: Option<String>,
    detached: CommitId,
}

fn contents(repo: &Repository) -> Vec<(String, String)> {
    repo.resources()
        .iter()
        .map(|r| (r.id.to_string(), r.content.clone()))
        .collect()
}

fn apply(repo: &mut Repository, m: &mut Model, op: &Op) -> CaseResult {
    let writable = m.head.is_some();
    let branch_heads_before = m.branches.clone();
    match op {
        Op::Add(t) => {
            let r = repo.add_resource(t, "s", Source::Imported);
            prop_assert_eq!(r.is_ok(), writable);
            if let Ok(id) = r {
                m.working.push((id.to_string(), t.clone()));
            }
        }
        Op::Update(i, t) => {
            if m.working.is_empty() {
                return Ok(());
            }
            let i = i % m.working.len();
            let id = m.working[i].0.clone();
            let r = repo.update_resource(&id, ResourceField::Content, t);
            prop_assert_eq!(r.is_ok(), writable);
            if r.is_ok() {
                m.working[i].1 = t.clone();
            }
        }
        Op::Remove(i) => {
            if m.working.is_empty() {
                return Ok(());
            }
            let i = i % m.working.len();
            let id = m.working[i].0.clone();
            let r = repo.remove_resource(&id);
            prop_assert_eq!(r.is_ok(), writable);
            if r.is_ok() {
                m.working.remove(i);
            }
        }
        Op::Commit => {
            let before = repo.working_snapshot().canonical_bytes();
            let r = repo.commit("c");
            prop_assert_eq!(r.is_ok(), writable);
            if let Ok(id) = r {
                let snap = repo.snapshot_of(&id).unwrap();
                prop_assert_eq!(snap.canonical_bytes(), before);
                let branch = m.head.clone().unwrap();
                prop_assert_eq!(&repo.commit_by_id(&id).unwrap().parents, &vec![m.branches[&branch].clone()]);
                m.branches.insert(branch, id.clone());
                m.commits.insert(id.clone(), m.working.clone());
                m.order.push(id);
            }
        }
        Op::Branch(n) => {
            let name = format!("b{n}");
            let r = repo.create_branch(&name, "");
            prop_assert_eq!(r.is_ok(), !m.branches.contains_key(&name));
            if r.is_ok() {
                let at = match &m.head {
                    Some(b) => m.branches[b].clone(),
                    None => m.detached.clone(),
                };
                m.branches.insert(name, at);
            }
        }
        Op::CheckoutBranch(i) => {
            let name = m.branches.keys().nth(i % m.branches.len()).unwrap().clone();
            repo.checkout(&name).unwrap();
            m.working = m.commits[&m.branches[&name]].clone();
            m.head = Some(name);
        }
        Op::CheckoutCommit(i) => {
            let id = m.order[i % m.order.len()].clone();
            repo.checkout(id.as_str()).unwrap();
            m.working = m.commits[&id].clone();
            m.head = None;
            m.detached = id;
        }
    }
    if !matches!(op, Op::Commit | Op::Branch(_)) {
        prop_assert_eq!(&m.branches, &branch_heads_before);
    }
    Ok(())
}

fn check(repo: &Repository, m: &Model) -> CaseResult {
    prop_assert_eq!(contents(repo), m.working.clone());
    for (name, head) in &m.branches {
        prop_assert_eq!(&repo.branch(name).unwrap().head, head, "branch {}", name);
    }
    prop_assert_eq!(repo.list_branches().len(), m.branches.len());
    match (&m.head, repo.head()) {
        (Some(b), Head::Branch(h)) => prop_assert_eq!(b, h),
        (None, Head::Detached(c)) => prop_assert_eq!(c, &m.detached),
        (want, got) => return Err(TestCaseError::fail(format!("head mismatch: {want:?} vs {got:?}"))),
    }
    prop_assert_eq!(repo.commits().count(), m.order.len());
    let topo = repo.topological_order().unwrap();
    prop_assert_eq!(topo.len(), m.order.len());
    let pos: HashMap<&CommitId, usize> = topo.iter().enumerate().map(|(i, c)| (c, i)).collect();
    for c in repo.commits() {
        for p in &c.parents {
            prop_assert!(pos[p] < pos[&c.id]);
            prop_assert!(repo.commit_by_id(p).unwrap().timestamp < c.timestamp);
        }
    }
    Ok(())
}

/// Replays `ops` against the repository and the model, then restores every
/// commit and compares bytes.
pub fn version_control_case(ops: &[Op]) -> CaseResult {
    let mut repo = Repository::new();
    let root = repo.head_commit_id().clone();
    let mut m = Model {
        working: Vec::new(),
        commits: HashMap::from([(root.clone(), Vec::new())]),
        order: vec![root.clone()],
        branches: BTreeMap::from([("main".to_string(), root.clone())]),
        head: Some("main".into()),
        detached: root,
    };
    for op in ops {
        apply(&mut repo, &mut m, op)?;
        check(&repo, &m)?;
    }
    for id in m.order.clone() {
        let want = repo.snapshot_of(&id).unwrap().canonical_bytes();
        repo.checkout(id.as_str()).unwrap();
        prop_assert_eq!(repo.working_snapshot().canonical_bytes(), want);
        prop_assert_eq!(contents(&repo), m.commits[&id].clone());
    }
    Ok(())
}

// ----- retrieval --------------------------------------------------------------

const VOCAB: [&str; 10] = ["apple", "river", "stone", "cloud", "ember", "frost", "grain", "harbor", "ivory", "jade"];

pub fn doc() -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(VOCAB.to_vec()), 1..5).prop_map(|w| w.join(" "))
}

pub fn search_input() -> impl Strategy<Value = (Vec<String>, String, usize)> {
    (prop::collection::vec(doc(), 0..=64), doc(), 1usize..70)
}

pub fn jaccard_oracle(a: &HashSet<String>, b: &HashSet<String>) -> f64 {
    let inter = a.iter().filter(|x| b.contains(*x)).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

pub fn cosine_oracle(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Descending score, earlier position first on ties, insertion sort.
pub fn rank_oracle(scored: Vec<(String, f64)>, k: usize) -> Vec<(String, f64)> {
    let mut out: Vec<(String, f64)> = Vec::new();
    for item in scored {
        let at = out.iter().position(|o| o.1 < item.1).unwrap_or(out.len());
        out.insert(at, item);
    }
    out.truncate(k);
    out
}

fn same_ranking(got: &[(String, f64)], want: &[(String, f64)]) -> CaseResult {
    prop_assert_eq!(got.len(), want.len());
    for (g, w) in got.iter().zip(want) {
        prop_assert_eq!(&g.0, &w.0);
        prop_assert!((g.1 - w.1).abs() < 1e-12);
    }
    Ok(())
}

pub fn search_case(docs: &[String], query: &str, k: usize) -> CaseResult {
    let mut repo = Repository::new();
    for d in docs {
        repo.add_resource(d, "", Source::Imported).unwrap();
    }

    let q: HashSet<String> = query.split(' ').map(str::to_string).collect();
    let kw: Vec<(String, f64)> = repo
        .resources()
        .iter()
        .map(|r| (r.id.to_string(), jaccard_oracle(&q, &r.keywords.iter().cloned().collect())))
        .filter(|(_, s)| *s > 0.0)
        .collect();
    let got: Vec<(String, f64)> = keyword_search(&repo, query, k)
        .unwrap()
        .into_iter()
        .map(|h| (h.resource_id.to_string(), h.score))
        .collect();
    same_ranking(&got, &rank_oracle(kw, k))?;

    let provider = HashingEmbedder::default();
    let got: Vec<(String, f64)> = embedding_search(&mut repo, &provider, query, k)
        .unwrap()
        .into_iter()
        .map(|h| (h.resource_id.to_string(), h.score))
        .collect();
    let qv = provider.embed(query).unwrap();
    let emb: Vec<(String, f64)> = repo
        .resources()
        .iter()
        .map(|r| {
            let v = provider.embed(&r.content).unwrap();
            (r.id.to_string(), (1.0 + cosine_oracle(&qv, &v)) / 2.0)
        })
        .collect();
    same_ranking(&got, &rank_oracle(emb, k))
}

// ----- chrF++ -------------------------------------------------------------------

/// Straight counting over substrings; word tokens split one edge
/// punctuation mark, as the sacreBLEU tokenizer does.
pub fn chrf_oracle(hyp: &str, reference: &str) -> f64 {
    fn grams(tokens: &[String], n: usize, join: &str) -> BTreeMap<String, usize> {
        let mut m = BTreeMap::new();
        for i in 0..tokens.len().saturating_sub(n - 1) {
            if i + n <= tokens.len() {
                *m.entry(tokens[i..i + n].join(join)).or_insert(0) += 1;
            }
        }
        m
    }
    fn chars(s: &str) -> Vec<String> {
        s.chars().filter(|c| !c.is_whitespace()).map(String::from).collect()
    }
    fn toks(s: &str) -> Vec<String> {
        let mut out = Vec::new();
        for w in s.split_whitespace() {
            let n = w.chars().count();
            let first = w.chars().next().unwrap();
            let last = w.chars().last().unwrap();
            if n > 1 && last.is_ascii_punctuation() {
                out.push(w.chars().take(n - 1).collect());
                out.push(last.to_string());
            } else if n > 1 && first.is_ascii_punctuation() {
                out.push(first.to_string());
                out.push(w.chars().skip(1).collect());
            } else {
                out.push(w.to_string());
            }
        }
        out
    }
    let mut rows = Vec::new();
    for (h, r, max, join) in [(chars(hyp), chars(reference), 6, "\u{1}"), (toks(hyp), toks(reference), 2, " ")] {
        for n in 1..=max {
            let hg = grams(&h, n, join);
            let mut rg = grams(&r, n, join);
            let mut matched = 0;
            for (g, c) in &hg {
                for _ in 0..*c {
                    if let Some(left) = rg.get_mut(g).filter(|x| **x > 0) {
                        *left -= 1;
                        matched += 1;
                    }
                }
            }
            rows.push((hg.values().sum::<usize>(), grams(&r, n, join).values().sum::<usize>(), matched));
        }
    }
    let eps = 1e-16;
    let (mut p, mut r, mut eff) = (0.0, 0.0, 0.0);
    for (nh, nr, nm) in rows {
        p += if nh > 0 { nm as f64 / nh as f64 } else { eps };
        r += if nr > 0 { nm as f64 / nr as f64 } else { eps };
        if nh > 0 && nr > 0 {
            eff += 1.0;
        }
    }
    if eff == 0.0 {
        return 0.0;
    }
    p /= eff;
    r /= eff;
    if p + r == 0.0 {
        return 0.0;
    }
    (100.0 * 5.0 * p * r / (4.0 * p + r)).clamp(0.0, 100.0)
}

pub fn sentence() -> impl Strategy<Value = String> {
    let word = prop_oneof![
        prop::sample::select(vec!["the", "cat", "sat", "on", "mat", "a", "dog", "ran"]).prop_map(String::from),
        "[a-e]{1,4}[.,!?]?",
        "[(\"]?[a-c]{1,3}",
        "[éüß]{1,2}",
    ];
    prop::collection::vec(word, 0..9).prop_map(|w| w.join(" "))
}

pub fn chrf_case(h: &str, r: &str) -> CaseResult {
    let got = chrf_pp(h, r);
    if r.trim().is_empty() {
        prop_assert!(got.is_err());
    } else {
        let got = got.unwrap();
        let want = chrf_oracle(h, r);
        prop_assert!((got - want).abs() < 1e-6, "{} vs {}", got, want);
        prop_assert!((0.0..=100.0).contains(&got));
    }
    Ok(())
}

pub fn chrf_identity_case(x: &str) -> CaseResult {
    if !x.trim().is_empty() {
        prop_assert_eq!(chrf_pp(x, x).unwrap(), 100.0);
    }
    Ok(())
}

// ----- action-blob protocol -------------------------------------------------

#[derive(Debug, Clone)]
pub enum Segment {
    Prose(String),
    Valid(String, Map<String, Value>, bool),
    Invalid(String),
}

pub fn segments() -> impl Strategy<Value = Vec<Segment>> {
    let args = prop::collection::btree_map("[a-c]{1,3}", "[a-z {}\"]{0,6}", 0..3)
        .prop_map(|m| m.into_iter().map(|(k, v)| (k, Value::String(v))).collect::<Map<_, _>>());
    let segment = prop_oneof![
        "[A-Za-z .:\n]{0,20}".prop_map(Segment::Prose),
        ("[a-z_]{1,8}", args, any::<bool>()).prop_map(|(n, a, pretty)| Segment::Valid(n, a, pretty)),
        prop_oneof![
            Just(r#"{"name": "x"}"#.to_string()),
            Just(r#"{"nam": "x", "arguments": {}}"#.to_string()),
            Just(r#"{"name": "", "arguments": {}}"#.to_string()),
            Just(r#"{"name": "x", "arguments": [1]}"#.to_string()),
            Just(r#"{"name": "x", "arguments": {"a": }}"#.to_string()),
            Just("{ not json }".to_string()),
        ]
        .prop_map(Segment::Invalid),
    ];
    prop::collection::vec(segment, 0..8)
}

pub fn last_valid_blob_case(segments: &[Segment]) -> CaseResult {
    let mut text = String::new();
    let mut want = None;
    for s in segments {
        match s {
            Segment::Prose(p) => text.push_str(p),
            Segment::Invalid(b) => text.push_str(b),
            Segment::Valid(name, args, pretty) => {
                let call = ToolCall::new(name.clone(), args.clone());
                if *pretty {
                    text.push_str(&format_action(&call));
                } else {
                    text.push_str(&serde_json::to_string(&json!({"name": name, "arguments": args})).unwrap());
                }
                want = Some((name.clone(), args.clone()));
            }
        }
        text.push('\n');
    }
    let got = parse_action_blob(&text).map(|c| (c.name, c.arguments));
    prop_assert_eq!(got, want);
    Ok(())
}

fn action(name: &str, args: Value) -> String {
    format!("Thought: next.\n{}", format_action(&ToolCall::with_args(name, args)))
}

fn search() -> SearchSetup {
    SearchSetup {
        embedder: Arc::new(HashingEmbedder::default()),
        search_agent: None,
    }
}

pub fn duplicate_call_case() -> CaseResult {
    let add = action(CONTEXT_TOOL, json!({"action": "add", "content": "x #a", "summary": "s"}));
    let backend = SequenceBackend::new(vec![add.clone(), add, action(FINAL_ANSWER_TOOL, json!({"answer": "done"}))]);
    let mut ws = Workspace::with_repository(Repository::new());
    let registry = optimizer_registry(search(), None, DEFAULT_PAYLOAD_CAP);
    let prompt = RenderedPrompt { system: "s".into(), user: "u".into() };
    let t = run_agent(&AgentConfig::optimizer(), &prompt, &registry, &mut ws, PromptMode::Training, &backend);
    prop_assert!(t.is_completed());
    prop_assert_eq!(ws.active().unwrap().resources().len(), 1);
    prop_assert!(!t.tool_calls[1].result.ok);
    prop_assert!(t.tool_calls[1]
        .result
        .observation()
        .contains(DUPLICATE_CALL_MESSAGE.trim_start_matches("Error: ")));
    Ok(())
}

pub fn vc_calls() -> impl Strategy<Value = Vec<Value>> {
    let word = "[a-z0-9/]{0,8}";
    let call = prop_oneof![
        word.prop_map(|n| json!({"action": "create_branch", "name": n})),
        word.prop_map(|t| json!({"action": "checkout", "target": t})),
        Just(json!({"action": "checkout", "target": "main"})),
        Just(json!({"action": "checkout", "target": "side"})),
        word.prop_map(|m| json!({"action": "commit", "message": m})),
        Just(json!({"action": "merge_branch", "source_branch": "side", "target_branch": "main"})),
        Just(json!({"action": "list_branches"})),
        (word, word).prop_map(|(n, k)| json!({"action": "update_branch_info", "name": n, "key": k, "description": "d"})),
        Just(json!({"action": "update_branch_info", "name": "main", "key": "score", "description": "1.0"})),
    ];
    prop::collection::vec(call, 1..12)
}

/// Commits, branch records, head and working bytes.
pub type RepoState = (Vec<String>, Vec<(String, String, String)>, String, Vec<u8>);

pub fn repo_state(repo: &Repository) -> RepoState {
    (
        repo.commits().map(|c| c.id.to_string()).collect(),
        repo.list_branches()
            .iter()
            .map(|b| (b.name.clone(), b.head.to_string(), format!("{:?}{:?}", b.description, b.metadata)))
            .collect(),
        format!("{:?}", repo.head()),
        repo.working_snapshot().canonical_bytes(),
    )
}

/// An optimizer session issuing only version-control actions leaves the
/// repository untouched.
pub fn vc_isolation_case(calls: &[Value]) -> CaseResult {
    let mut repo = Repository::new();
    repo.add_resource("seed #a", "s", Source::Imported).unwrap();
    repo.commit("seed").unwrap();
    repo.create_branch("side", "").unwrap();
    let before = repo_state(&repo);
    let mut ws = Workspace::with_repository(repo);

    let mut replies: Vec<String> = calls.iter().map(|c| action(CONTEXT_TOOL, c.clone())).collect();
    replies.push(action(FINAL_ANSWER_TOOL, json!({"answer": "done"})));
    let backend = SequenceBackend::new(replies);
    let registry = optimizer_registry(search(), None, DEFAULT_PAYLOAD_CAP);
    let prompt = RenderedPrompt { system: "s".into(), user: "u".into() };
    let config = AgentConfig { max_steps: calls.len() + 1, ..AgentConfig::optimizer() };
    let t = run_agent(&config, &prompt, &registry, &mut ws, PromptMode::Training, &backend);
    prop_assert!(t.is_completed());
    prop_assert!(t.tool_calls[..calls.len()].iter().all(|c| !c.result.ok));
    prop_assert_eq!(ws.len(), 1);
    prop_assert_eq!(repo_state(ws.active().unwrap()), before);
    Ok(())
}

// ----- elitism ----------------------------------------------------------------

/// Beam run on a random world; the reported best never drops and always
/// equals the maximum validation score seen so far.
pub fn elitism_case(world: u64, seed: u64) -> CaseResult {
    let s = Scenario::random(world);
    let cfg = TrainConfig {
        mode: TrainMode::Beam,
        batch_size: 2,
        epochs: 2,
        seed,
        ..TrainConfig::default()
    };
    let mut t = Trainer::new(s.trainer_setup(cfg)).unwrap();
    let out = t.run().unwrap();
    let mut seen_max = f64::MIN;
    let mut last_best = f64::MIN;
    for e in t.ledger().events() {
        match e {
            LedgerEvent::Validation { score, .. } => seen_max = seen_max.max(*score),
            LedgerEvent::Selection { best_score, .. } => {
                prop_assert!(*best_score >= last_best);
                prop_assert_eq!(*best_score, seen_max);
                last_best = *best_score;
            }
            _ => {}
        }
    }
    prop_assert_eq!(out.best.score.unwrap(), seen_max);
    Ok(())
}
