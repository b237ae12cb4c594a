use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ctxforge::sim::Scenario;
use ctxforge::store::Repository;
use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_ctxforge"));
    c.env_remove("CTXFORGE_API_KEY");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(o: Output) -> String {
    assert_eq!(o.status.code(), Some(0), "stdout: {}\nstderr: {}", stdout(&o), stderr(&o));
    stdout(&o)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Scenario fixtures plus config in a temp dir.
fn scenario(name: &str) -> (TempDir, PathBuf) {
    let dir = TempDir::new().unwrap();
    let fx = dir.path().join("fx");
    ok(run(&["scenario", name, "--out", s(&fx)]));
    (dir, fx)
}

fn train(fx: &Path, out: &Path, extra: &[&str]) -> Output {
    let config = fx.join("config.toml");
    let mut args = vec!["train", "--config", s(&config), "--out", s(out)];
    args.extend_from_slice(extra);
    run(&args)
}

fn summary(run: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(run.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn beam_on_local_optima_reaches_the_optimum() {
    let (dir, fx) = scenario("local_optima");
    let out = dir.path().join("run");
    let text = ok(train(&fx, &out, &[]));
    assert!(text.contains("best: best <- beam/"), "{text}");
    assert!(summary(&out)["score"].as_f64().unwrap() >= 0.9);
    assert!(!out.join("run.lock").exists());

    let seq = dir.path().join("seq");
    ok(train(&fx, &seq, &["--mode", "seq", "--seed", "3"]));
    assert_eq!(summary(&seq)["score"].as_f64().unwrap(), 0.5);
}

#[test]
fn bon_reports_one_resource_per_task() {
    let (dir, fx) = scenario("pollution");
    let out = dir.path().join("bon");
    let text = ok(train(&fx, &out, &["--mode", "bon"]));
    assert!(text.contains("resources: 12"), "{text}");
}

#[test]
fn checked_in_fixtures_match_generated() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    for name in ["local_optima", "pollution", "budget"] {
        let (_dir, fx) = scenario(name);
        for file in ["scenario.json", "train.jsonl", "val.jsonl", "test.jsonl", "config.toml"] {
            let want = fs::read_to_string(fx.join(file)).unwrap();
            let got = fs::read_to_string(root.join(name).join(file)).unwrap();
            assert_eq!(got, want, "{name}/{file}");
        }
        let loaded = Scenario::load(&root.join(name)).unwrap();
        assert!(loaded.check_documented().is_empty());
    }
}

#[test]
fn usage_and_config_errors_exit_1() {
    assert_eq!(run(&[]).status.code(), Some(1));
    assert_eq!(run(&["train"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));

    let (dir, fx) = scenario("local_optima");
    let cfg = fx.join("config.toml");
    let text = fs::read_to_string(&cfg).unwrap();
    fs::write(&cfg, text.replace("beam_width = 2", "beam_widht = 2")).unwrap();
    let o = train(&fx, &dir.path().join("r"), &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("beam_widht"), "{}", stderr(&o));

    fs::write(&cfg, text.replace("batch_size = 4", "batch_size = 0")).unwrap();
    let o = train(&fx, &dir.path().join("r"), &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("batch_size"), "{}", stderr(&o));

    fs::write(&cfg, text.replace("kind = \"scripted\"", "kind = \"live\"")).unwrap();
    let o = train(&fx, &dir.path().join("r"), &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("CTXFORGE_API_KEY"), "{}", stderr(&o));
    assert!(!dir.path().join("r").join("config.toml").exists());
}

#[test]
fn missing_dataset_is_named() {
    let (dir, fx) = scenario("local_optima");
    let cfg = fx.join("config.toml");
    let text = fs::read_to_string(&cfg).unwrap();
    fs::write(&cfg, format!("{text}\n[data]\ntrain = \"nowhere/train.jsonl\"\n")).unwrap();
    let o = train(&fx, &dir.path().join("r"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nowhere/train.jsonl"), "{}", stderr(&o));
}

#[test]
fn existing_or_locked_run_directories_are_refused() {
    let (dir, fx) = scenario("local_optima");
    let out = dir.path().join("run");
    fs::create_dir_all(&out).unwrap();
    fs::write(out.join("keep.txt"), "x").unwrap();
    let o = train(&fx, &out, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--resume"));
    assert_eq!(fs::read_dir(&out).unwrap().count(), 1);

    let out = dir.path().join("locked");
    ok(train(&fx, &out, &["--mode", "seq"]));
    fs::write(out.join("run.lock"), "1").unwrap();
    let o = run(&["eval", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("in use"), "{}", stderr(&o));
}

#[test]
fn interrupted_run_resumes_from_cached_validations() {
    let (dir, fx) = scenario("pollution");
    let out = dir.path().join("run");
    ok(train(&fx, &out, &[]));
    let first = summary(&out);

    // Drop the completion record and the saved repository, as a crash would.
    let ledger = out.join("ledger.jsonl");
    let kept: Vec<String> = fs::read_to_string(&ledger)
        .unwrap()
        .lines()
        .filter(|l| !l.contains("\"run_finished\""))
        .map(String::from)
        .collect();
    fs::write(&ledger, kept.join("\n") + "\n").unwrap();
    fs::remove_dir_all(out.join("repo")).unwrap();
    fs::remove_file(out.join("summary.json")).unwrap();

    ok(train(&fx, &out, &["--resume"]));
    let second = summary(&out);
    assert_eq!(first["snapshot"], second["snapshot"]);
    assert_eq!(first["commit"], second["commit"]);
    assert_eq!(second["budget"]["validations"], 0);
    assert!(out.join("ledger.prev.jsonl").exists());

    let text = ok(train(&fx, &out, &["--resume"]));
    assert!(text.contains("already finished"));
    let o = train(&fx, &out, &["--resume", "--seed", "9"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn eval_matches_the_validation_score() {
    let (dir, fx) = scenario("local_optima");
    let out = dir.path().join("run");
    ok(train(&fx, &out, &["--mode", "seq"]));
    let score = summary(&out)["score"].as_f64().unwrap();
    let text = ok(run(&["eval", s(&out)]));
    assert!(text.contains(&format!("mean {score:.6}")), "{text}");
    let report: Value =
        serde_json::from_str(&fs::read_to_string(out.join("reports/eval-best-test.json")).unwrap()).unwrap();
    let scores: Vec<f64> = report["scores"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    assert!((mean - report["mean"].as_f64().unwrap()).abs() < 1e-12);
    assert!((mean - score).abs() < 1e-12);
    assert_eq!(report["snapshot_id"], summary(&out)["snapshot"]);

    let o = run(&["eval", s(&out), "--target", "no-such-branch"]);
    assert_eq!(o.status.code(), Some(2));

    let em = dir.path().join("em.json");
    ok(run(&["eval", s(&out), "--split", "val", "--metric", "exact_match", "--out", s(&em)]));
    assert!(em.exists());
}

#[test]
fn inspect_views() {
    let (dir, fx) = scenario("local_optima");
    let out = dir.path().join("run");
    let cfg = fx.join("config.toml");
    let text = fs::read_to_string(&cfg).unwrap();
    fs::write(&cfg, text.replace("seed = 0", "seed = 0\nmax_global_steps = 2")).unwrap();
    ok(train(&fx, &out, &["--mode", "seq"]));

    let branches = ok(run(&["inspect", s(&out), "branches"]));
    assert!(branches.contains("* best"), "{branches}");
    assert!(branches.lines().any(|l| l.contains(" seq ") && l.contains("0.500000")), "{branches}");

    let log = ok(run(&["inspect", s(&out), "log", "--target", "seq"]));
    let lines: Vec<&str> = log.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[2].ends_with("init"));
    let repo = Repository::open(&out.join("repo")).unwrap();
    let history = repo.log("seq").unwrap();
    for (line, commit) in lines.iter().zip(&history) {
        assert!(line.starts_with(commit.id.short()));
        assert!(line.ends_with(&commit.message));
    }

    let context = ok(run(&["inspect", s(&out), "context", "--target", "seq"]));
    let mut repo = repo;
    repo.checkout("seq").unwrap();
    let listing: Vec<String> = repo
        .list_resources(ctxforge::store::DetailLevel::Summary, None)
        .iter()
        .map(|e| e.render())
        .collect();
    assert_eq!(context.trim_end(), listing.join("\n"));
    let detail = ok(run(&["inspect", s(&out), "context", "--target", "seq", "--detail", "detail"]));
    assert!(detail.contains("#d1"));

    let traj = ok(run(&["inspect", s(&out), "trajectory"]));
    assert!(traj.starts_with("run started: mode seq"));
    assert!(traj.contains("run finished"));
    let table = ok(run(&["inspect", s(&out), "table"]));
    assert_eq!(table.lines().next().unwrap(), "step\tbranch\tscore\tkind");
    assert_eq!(table.lines().count(), 1 + 2 * 2);

    assert_eq!(run(&["inspect", s(&dir.path().join("nope")), "branches"]).status.code(), Some(2));
}

#[test]
fn export_import_roundtrip() {
    let (dir, fx) = scenario("local_optima");
    let out = dir.path().join("run");
    ok(train(&fx, &out, &[]));
    let snap = summary(&out)["snapshot"].as_str().unwrap().to_string();

    let doc = dir.path().join("best.json");
    ok(run(&["export", s(&out), "--out", s(&doc)]));
    let again = ok(run(&["export", s(&out)]));
    assert_eq!(fs::read_to_string(&doc).unwrap(), again);

    let other = dir.path().join("other");
    let text = ok(run(&["import", s(&other), "--file", s(&doc), "--branch", "transfer"]));
    assert!(text.contains(&snap), "{text}");
    let repo = Repository::open(&other.join("repo")).unwrap();
    let head = repo.resolve("transfer").unwrap();
    assert_eq!(repo.snapshot_of(&head).unwrap().id().as_str(), snap);

    let mut v: Value = serde_json::from_str(&again).unwrap();
    let first = v["resources"][0].clone();
    v["resources"].as_array_mut().unwrap().push(first);
    v["snapshot_id"] = Value::Null;
    let bad = dir.path().join("dup.json");
    fs::write(&bad, serde_json::to_string(&v).unwrap()).unwrap();
    let o = run(&["import", s(&other), "--file", s(&bad), "--branch", "dup"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("duplicate"), "{}", stderr(&o));
}

#[test]
fn identical_runs_produce_identical_repositories() {
    let (dir, fx) = scenario("pollution");
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(train(&fx, &a, &["--seed", "5"]));
    ok(train(&fx, &b, &["--seed", "5"]));
    for file in ["repo/commits.log", "repo/refs.json", "summary.json"] {
        assert_eq!(fs::read(a.join(file)).unwrap(), fs::read(b.join(file)).unwrap(), "{file}");
    }
}
