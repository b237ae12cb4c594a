use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::TrainConfig;

/// Work done by a run, by kind.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budget {
    pub optimizer_calls: usize,
    /// Validations actually executed, one per distinct snapshot.
    pub validations: usize,
    pub cache_hits: usize,
    pub executor_runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolEntry {
    pub branch: String,
    pub score: f64,
    pub elite: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum LedgerEvent {
    RunStarted {
        config: TrainConfig,
        train_hash: String,
        val_hash: String,
    },
    Validation {
        branch: String,
        commit: String,
        snapshot: String,
        score: f64,
        cached: bool,
    },
    OptimizerUpdate {
        step: usize,
        branch: String,
        parent: String,
        commit: String,
        summary: String,
        completed: bool,
        backend_calls: usize,
    },
    Selection {
        step: usize,
        pool: Vec<PoolEntry>,
        beam: Vec<String>,
        best_branch: String,
        best_score: f64,
    },
    SeqStep {
        step: usize,
        commit: String,
        score: f64,
        best_score: f64,
    },
    BonTask {
        index: usize,
        rewards: Vec<f64>,
        chosen: usize,
    },
    RunFinished {
        best_branch: String,
        best_commit: String,
        best_snapshot: String,
        best_score: f64,
        budget: Budget,
    },
}

/// Append-only run log. With a file attached, every event is written as
/// one JSON line as soon as it is recorded.
#[derive(Debug, Default)]
pub struct RunLedger {
    events: Vec<LedgerEvent>,
    sink: Option<File>,
}

impl RunLedger {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Appends to `path`, creating it if missing.
    pub fn to_file(path: &Path) -> io::Result<Self> {
        let sink = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            events: Vec::new(),
            sink: Some(sink),
        })
    }

    pub fn record(&mut self, event: LedgerEvent) -> io::Result<()> {
        if let Some(f) = &mut self.sink {
            let line = serde_json::to_string(&event).expect("ledger event serializes");
            writeln!(f, "{line}")?;
            f.flush()?;
        }
        self.events.push(event);
        Ok(())
    }

    pub fn events(&self) -> &[LedgerEvent] {
        &self.events
    }

    pub fn read(path: &Path) -> io::Result<Vec<LedgerEvent>> {
        let file = File::open(path)?;
        let mut events = Vec::new();
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let e = serde_json::from_str(&line).map_err(|e| {
                io::Error::new(io::ErrorKind::InvalidData, format!("{}:{}: {e}", path.display(), n + 1))
            })?;
            events.push(e);
        }
        Ok(events)
    }

    /// Renders the score trajectory as tab-separated rows for plotting:
    /// `step  branch  score  kind`.
    pub fn score_table(events: &[LedgerEvent]) -> String {
        let mut out = String::from("step\tbranch\tscore\tkind\n");
        for e in events {
            match e {
                LedgerEvent::Selection { step, pool, best_branch, best_score, .. } => {
                    for p in pool {
                        let kind = if p.elite { "elite" } else { "candidate" };
                        out.push_str(&format!("{step}\t{}\t{:.6}\t{kind}\n", p.branch, p.score));
                    }
                    out.push_str(&format!("{step}\t{best_branch}\t{best_score:.6}\tbest\n"));
                }
                LedgerEvent::SeqStep { step, score, best_score, .. } => {
                    out.push_str(&format!("{step}\tseq\t{score:.6}\tcandidate\n"));
                    out.push_str(&format!("{step}\tseq\t{best_score:.6}\tbest\n"));
                }
                _ => {}
            }
        }
        out
    }
}
