use std::sync::{Arc, Mutex};

use ctxforge::agents::{BackendError, ChatBackend, Message, Role, SequenceBackend};
use ctxforge::sim::{fact_tags, world_reward, OptimizerPlan, Scenario, Strategy};
use ctxforge::training::{
    LedgerEvent, RunOutcome, TrainConfig, TrainMode, Trainer, BEST_BRANCH, NO_OP_SUMMARY,
};

fn config(mode: TrainMode, steps: usize) -> TrainConfig {
    TrainConfig {
        mode,
        batch_size: 2,
        epochs: 10,
        max_global_steps: Some(steps),
        ..TrainConfig::default()
    }
}

fn train(scenario: &Scenario, cfg: TrainConfig) -> (Trainer, RunOutcome) {
    let mut t = Trainer::new(scenario.trainer_setup(cfg)).unwrap();
    let out = t.run().unwrap();
    (t, out)
}

/// Pool (branch, score), kept beam and best score per selection.
type Selection = (Vec<(String, f64)>, Vec<String>, f64);

fn selections(t: &Trainer) -> Vec<Selection> {
    t.ledger()
        .events()
        .iter()
        .filter_map(|e| match e {
            LedgerEvent::Selection { pool, beam, best_score, .. } => Some((
                pool.iter().map(|p| (p.branch.clone(), p.score)).collect(),
                beam.clone(),
                *best_score,
            )),
            _ => None,
        })
        .collect()
}

fn seq_scores(t: &Trainer) -> Vec<(f64, f64)> {
    t.ledger()
        .events()
        .iter()
        .filter_map(|e| match e {
            LedgerEvent::SeqStep { score, best_score, .. } => Some((*score, *best_score)),
            _ => None,
        })
        .collect()
}

fn approx(a: f64, b: f64) -> bool {
    (a - b).abs() < 1e-9
}

/// Records the user prompt of every fresh optimizer conversation.
struct Capture<B> {
    inner: B,
    prompts: Mutex<Vec<String>>,
}

impl<B: ChatBackend> ChatBackend for Capture<B> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn complete(&self, messages: &[Message]) -> Result<String, BackendError> {
        if messages.len() == 2 {
            let user = messages.iter().find(|m| m.role == Role::User).unwrap();
            self.prompts.lock().unwrap().push(user.content.clone());
        }
        self.inner.complete(messages)
    }
}

#[test]
fn local_optima_beam_escapes_where_seq_stalls() {
    let s = Scenario::local_optima();
    let (t, beam) = train(&s, config(TrainMode::Beam, 4));
    assert!(beam.best.score.unwrap() >= 0.9);
    let best: Vec<f64> = selections(&t).iter().map(|s| s.2).collect();
    for (got, want) in best.iter().zip([0.3, 0.6, 0.9, 1.0]) {
        assert!(approx(*got, want), "{best:?}");
    }

    let (t, seq) = train(&s, config(TrainMode::Seq, 8));
    assert!(approx(seq.best.score.unwrap(), 0.5));
    assert!(seq_scores(&t).iter().all(|(s, _)| *s <= 0.5 + 1e-12));
}

#[test]
fn pollution_seq_keeps_the_pre_pollution_checkpoint() {
    let s = Scenario::pollution();
    let (t, out) = train(&s, config(TrainMode::Seq, 3));
    let steps = seq_scores(&t);
    let scores: Vec<f64> = steps.iter().map(|s| s.0).collect();
    for (got, want) in scores.iter().zip([0.6, 0.12, 0.2]) {
        assert!(approx(*got, want), "{scores:?}");
    }
    assert!(steps.iter().all(|(_, b)| approx(*b, 0.6)));
    assert!(approx(out.best.score.unwrap(), 0.6));

    let repo = t.repository();
    let first_update = repo.log("seq").unwrap().into_iter().rev().nth(1).unwrap().id.clone();
    assert_eq!(out.best.head, first_update);
    assert_eq!(repo.resolve(BEST_BRANCH).unwrap(), first_update);
}

#[test]
fn pollution_beam_rejects_the_poisoned_child() {
    let s = Scenario::pollution();
    for seed in 0..20 {
        let cfg = TrainConfig { seed, ..config(TrainMode::Beam, 3) };
        let (t, out) = train(&s, cfg);
        let repo = t.repository();
        let poisoned = |branch: &str| {
            let snap = repo.snapshot_of(&repo.resolve(branch).unwrap()).unwrap();
            snap.resources()
                .iter()
                .flat_map(|r| fact_tags(&r.content))
                .any(|tag| s.world.poison.contains(&tag))
        };
        let mut pre_pollution = 0.0f64;
        for (pool, beam, best) in selections(&t) {
            let top = pool.iter().map(|p| p.1).fold(f64::MIN, f64::max);
            for (branch, score) in &pool {
                if poisoned(branch) && *score < top {
                    assert!(!beam.contains(branch), "seed {seed}: {branch} kept");
                }
                if !poisoned(branch) {
                    pre_pollution = pre_pollution.max(*score);
                }
            }
            assert!(best >= pre_pollution - 1e-12);
        }
        assert!(out.best.score.unwrap() >= pre_pollution);
        assert!(approx(out.best.score.unwrap(), 1.0));
    }
}

#[test]
fn budget_matches_hand_arithmetic() {
    let s = Scenario::budget();
    for steps in 1..=4 {
        let (t, out) = train(&s, config(TrainMode::Beam, steps));
        assert_eq!(out.budget.optimizer_calls, 6 * steps);
        assert_eq!(out.budget.validations, 6 * steps + 1);
        let distinct: std::collections::BTreeSet<&str> = t
            .ledger()
            .events()
            .iter()
            .filter_map(|e| match e {
                LedgerEvent::Validation { snapshot, .. } => Some(snapshot.as_str()),
                _ => None,
            })
            .collect();
        assert_eq!(distinct.len(), 6 * steps + 1);

        let literal = TrainConfig {
            replicate_initial_beam: false,
            ..config(TrainMode::Beam, steps)
        };
        assert_eq!(literal.optimizer_calls_for(steps), 6 * steps - 3);
        let (_, out) = train(&s, literal);
        assert_eq!(out.budget.optimizer_calls, 6 * steps - 3);
    }
}

#[test]
fn runs_are_deterministic() {
    for name in ["local_optima", "random_7"] {
        let s = Scenario::by_name(name).unwrap();
        let run = || {
            let (t, out) = train(&s, TrainConfig { seed: 11, ..config(TrainMode::Beam, 3) });
            let repo = t.into_repository();
            let commits: Vec<String> = repo.commits().map(|c| c.id.to_string()).collect();
            let branches: Vec<(String, String)> = repo
                .list_branches()
                .iter()
                .map(|b| (b.name.clone(), b.head.to_string()))
                .collect();
            (commits, branches, out.snapshot)
        };
        assert_eq!(run(), run());
    }
}

#[test]
fn failed_optimizer_commits_an_empty_diff() {
    let s = Scenario::local_optima();
    let mut setup = s.trainer_setup(config(TrainMode::Seq, 2));
    setup.optimizer = Arc::new(SequenceBackend::with_results(vec![Err(BackendError::Fatal(
        "down".into(),
    ))]));
    let mut t = Trainer::new(setup).unwrap();
    let out = t.run().unwrap();
    let repo = t.repository();
    let log = repo.log("seq").unwrap();
    assert_eq!(log.len(), 3);
    assert!(log[..2].iter().all(|c| c.message == NO_OP_SUMMARY));
    assert!(log.iter().all(|c| c.snapshot == log[2].snapshot));
    assert_eq!(out.best.score, Some(0.0));

    // A reply without any action blob exhausts the step budget.
    let mut setup = s.trainer_setup(config(TrainMode::Seq, 1));
    setup.optimizer = Arc::new(SequenceBackend::new(vec!["Thinking about it.".into()]));
    let mut t = Trainer::new(setup).unwrap();
    t.run().unwrap();
    assert_eq!(t.repository().log("seq").unwrap()[0].message, NO_OP_SUMMARY);
}

#[test]
fn siblings_see_earlier_summaries_and_lanes_diverge() {
    let s = Scenario::local_optima();
    let capture = Arc::new(Capture {
        inner: s.optimizer_backend(),
        prompts: Mutex::new(Vec::new()),
    });
    let mut setup = s.trainer_setup(TrainConfig {
        replicate_initial_beam: false,
        ..config(TrainMode::Beam, 1)
    });
    setup.optimizer = capture.clone();
    let mut t = Trainer::new(setup).unwrap();
    t.run().unwrap();

    let prompts = capture.prompts.lock().unwrap().clone();
    assert_eq!(prompts.len(), 3);
    assert!(!prompts[0].contains("- attempt 1:"));
    let first = t
        .ledger()
        .events()
        .iter()
        .find_map(|e| match e {
            LedgerEvent::OptimizerUpdate { branch, summary, .. } if branch == "beam/s1/p0/c0" => {
                Some(summary.clone())
            }
            _ => None,
        })
        .unwrap();
    assert!(prompts[1].contains(&format!("- attempt 1: {first}")));
    assert!(prompts[2].contains("- attempt 2:"));

    let repo = t.repository();
    let snaps: std::collections::BTreeSet<_> = (0..3)
        .map(|j| repo.snapshot_of(&repo.resolve(&format!("beam/s1/p0/c{j}")).unwrap()).unwrap().id().clone())
        .collect();
    assert_eq!(snaps.len(), 3);
}

#[test]
fn steps_per_child_commit_once_per_update() {
    let s = Scenario::local_optima();
    let (t, out) = train(
        &s,
        TrainConfig {
            steps_per_child: 2,
            ..config(TrainMode::Beam, 2)
        },
    );
    let repo = t.repository();
    let root = repo.resolve("beam/root").unwrap();
    for step in 1..=2 {
        for p in 0..2 {
            for c in 0..3 {
                let branch = format!("beam/s{step}/p{p}/c{c}");
                let head = repo.resolve(&branch).unwrap();
                let commit = repo.commit_by_id(&head).unwrap();
                let parent = repo.commit_by_id(&commit.parents[0]).unwrap();
                assert_eq!(commit.parents.len(), 1);
                // Two updates per child: the grandparent commit is the fork point.
                let fork = &parent.parents[0];
                if step == 1 {
                    assert_eq!(fork, &root);
                } else {
                    let info = &repo.branch(&branch).unwrap().metadata;
                    let parent_branch = &info["parent"];
                    assert!(parent_branch.starts_with("beam/"));
                    assert_eq!(fork, &repo.resolve(parent_branch).unwrap());
                }
            }
        }
    }
    assert_eq!(out.budget.optimizer_calls, 2 * 12);
    let best: Vec<f64> = selections(&t).iter().map(|s| s.2).collect();
    assert!(best.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn do_nothing_lanes_keep_the_root() {
    let mut s = Scenario::local_optima();
    s.optimizer = OptimizerPlan::Lanes {
        lanes: vec![vec![Strategy::NoOp]],
    };
    let (t, out) = train(&s, config(TrainMode::Beam, 3));
    assert_eq!(out.best.branch, "beam/root");
    assert_eq!(out.best.score, Some(0.0));
    let empty = t.repository().snapshot_of(&t.repository().resolve("main").unwrap()).unwrap();
    assert_eq!(&out.snapshot, empty.id());
    // Every child repeats the empty snapshot, so only the root is executed.
    assert_eq!(out.budget.validations, 1);
    assert_eq!(out.budget.cache_hits, 18);
}

#[test]
fn best_of_n_stores_one_answer_per_task() {
    let s = Scenario::local_optima();
    let (t, out) = train(&s, TrainConfig { best_of_n: 1, ..config(TrainMode::Bon, 0) });
    let snap = t.repository().snapshot_of(&out.best.head).unwrap();
    assert_eq!(snap.len(), s.train.len() + s.val.len());
    assert_eq!(out.budget.optimizer_calls, 0);
    assert_eq!(t.repository().log("bon").unwrap().len(), 2);

    let (t, _) = train(&s, TrainConfig { best_of_n: 8, ..config(TrainMode::Bon, 0) });
    for e in t.ledger().events() {
        if let LedgerEvent::BonTask { rewards, chosen, .. } = e {
            assert_eq!(rewards.len(), 8);
            let max = rewards.iter().cloned().fold(f64::MIN, f64::max);
            assert_eq!(*chosen, rewards.iter().position(|r| *r == max).unwrap());
        }
    }
}

#[test]
fn validation_score_equals_world_reward() {
    for name in ["local_optima", "pollution", "random_3"] {
        let s = Scenario::by_name(name).unwrap();
        let (t, _) = train(&s, config(TrainMode::Beam, 2));
        let repo = t.repository();
        for e in t.ledger().events() {
            if let LedgerEvent::Validation { commit, score, .. } = e {
                let id = repo.resolve(commit).unwrap();
                let snap = repo.snapshot_of(&id).unwrap();
                assert!(approx(*score, world_reward(&snap, &s.world)), "{name} {commit}");
            }
        }
    }
}
