use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Dataset, RewardFn};
use crate::agents::{ExecutorAgent, PromptMode};
use crate::store::ContextSnapshot;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("empty dataset")]
    EmptyDataset,
    #[error("cannot write report {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metric: String,
    pub params: String,
    pub dataset_hash: String,
    pub snapshot_id: String,
    pub scores: Vec<f64>,
    pub mean: f64,
    /// Per-task reward errors, by task index; those tasks score 0.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub errors: Vec<(usize, String)>,
}

impl EvalReport {
    pub fn recomputed_mean(&self) -> f64 {
        mean(&self.scores)
    }

    pub fn save(&self, path: &Path) -> Result<(), EvalError> {
        let text = serde_json::to_string_pretty(self).expect("report serializes");
        fs::write(path, text + "\n").map_err(|source| EvalError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Runs the executor in inference mode on every task and scores it.
pub fn evaluate(
    executor: &ExecutorAgent,
    snapshot: &ContextSnapshot,
    dataset: &Dataset,
    reward: &dyn RewardFn,
) -> Result<EvalReport, EvalError> {
    if dataset.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    let mut scores = Vec::with_capacity(dataset.len());
    let mut errors = Vec::new();
    for (i, task) in dataset.tasks.iter().enumerate() {
        let t = executor.run(snapshot, &task.input, PromptMode::Inference);
        let score = if t.is_completed() {
            match reward.score(task, t.output()) {
                Ok(r) if r.score.is_finite() => r.score,
                Ok(r) => {
                    errors.push((i, format!("non-finite reward {}", r.score)));
                    0.0
                }
                Err(e) => {
                    errors.push((i, e.to_string()));
                    0.0
                }
            }
        } else {
            0.0
        };
        scores.push(score);
    }
    Ok(EvalReport {
        metric: reward.name().to_string(),
        params: reward.params(),
        dataset_hash: dataset.hash.clone(),
        snapshot_id: snapshot.id().to_string(),
        mean: mean(&scores),
        scores,
        errors,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::agents::{AgentConfig, BackendError, Message, PreviewStrategy, ScriptedBackend};
    use crate::evaluation::{ExactMatch, Task};
    use crate::retrieval::HashingEmbedder;
    use crate::tools::SearchSetup;

    /// Answers with the text after "TASK\n" in the prompt.
    fn echo_executor() -> ExecutorAgent {
        let backend = ScriptedBackend::new("echo", |m: &[Message]| -> Result<String, BackendError> {
            let task = m[1].content.rsplit("#### TASK\n").next().unwrap_or_default();
            let blob = serde_json::json!({"name": "final_answer_tool", "arguments": {"answer": task}});
            Ok(format!("Action:\n{blob}"))
        });
        ExecutorAgent::new(
            Arc::new(backend),
            AgentConfig::executor(),
            SearchSetup {
                embedder: Arc::new(HashingEmbedder::default()),
                search_agent: None,
            },
            PreviewStrategy::full(),
            2000,
        )
    }

    #[test]
    fn perfect_executor_scores_one() {
        let data = Dataset::new(vec![
            Task::new("alpha", Some("ALPHA".into())),
            Task::new("beta", Some("beta".into())),
        ]);
        let r = evaluate(&echo_executor(), &ContextSnapshot::empty(), &data, &ExactMatch).unwrap();
        assert_eq!(r.mean, 1.0);
        assert_eq!(r.mean, r.recomputed_mean());
        assert_eq!(r.dataset_hash, data.hash);
    }

    #[test]
    fn empty_dataset_rejected() {
        let err = evaluate(&echo_executor(), &ContextSnapshot::empty(), &Dataset::new(vec![]), &ExactMatch)
            .unwrap_err();
        assert_eq!(err.to_string(), "empty dataset");
    }
}
