//! Reward functions, task datasets and held-out evaluation.

mod chrf;
mod dataset;
mod report;

pub use self::chrf::{chrf_pp, f_score, statistics, words, EmptyReference, BETA, CHAR_ORDER, WORD_ORDER};
pub use self::dataset::{Dataset, DatasetError, Task};
pub use self::report::{evaluate, mean, EvalError, EvalReport};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reward {
    pub score: f64,
    /// Natural-language feedback shown to the optimizer, when available.
    pub feedback: Option<String>,
}

impl Reward {
    pub fn new(score: f64) -> Self {
        Self {
            score,
            feedback: None,
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum RewardError {
    #[error("task has no reference answer")]
    MissingReference,
    #[error("{0}")]
    Other(String),
}

/// Scores one executor output for one task. Implementations for rubric
/// grading or code execution plug in here.
pub trait RewardFn: Send + Sync {
    fn name(&self) -> &str;
    /// Parameters recorded in evaluation reports.
    fn params(&self) -> String {
        String::new()
    }
    fn score(&self, task: &Task, output: &str) -> Result<Reward, RewardError>;
}

/// 1 when trimmed, case-folded strings are equal.
pub fn exact_match(hypothesis: &str, reference: &str) -> f64 {
    if hypothesis.trim().to_lowercase() == reference.trim().to_lowercase() {
        1.0
    } else {
        0.0
    }
}

pub struct ExactMatch;

impl RewardFn for ExactMatch {
    fn name(&self) -> &str {
        "exact_match"
    }

    fn score(&self, task: &Task, output: &str) -> Result<Reward, RewardError> {
        let reference = task.reference.as_deref().ok_or(RewardError::MissingReference)?;
        Ok(Reward::new(exact_match(output, reference)))
    }
}

/// chrF++ on the 0..100 scale.
pub struct ChrfPlusPlus;

impl RewardFn for ChrfPlusPlus {
    fn name(&self) -> &str {
        "chrf++"
    }

    fn params(&self) -> String {
        format!("char_order={CHAR_ORDER},word_order={WORD_ORDER},beta={BETA}")
    }

    fn score(&self, task: &Task, output: &str) -> Result<Reward, RewardError> {
        let reference = task.reference.as_deref().ok_or(RewardError::MissingReference)?;
        let s = chrf_pp(output, reference).map_err(|e| RewardError::Other(e.to_string()))?;
        Ok(Reward {
            score: s,
            feedback: Some(format!("chrF++ {s:.2}")),
        })
    }
}

/// Built-in reward by name (`exact_match`, `chrf++`/`chrf`).
pub fn builtin_reward(name: &str) -> Option<Box<dyn RewardFn>> {
    match name.trim().to_ascii_lowercase().as_str() {
        "exact_match" | "em" => Some(Box::new(ExactMatch)),
        "chrf++" | "chrf" | "chrfpp" => Some(Box::new(ChrfPlusPlus)),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_match_normalizes() {
        assert_eq!(exact_match("A ", "a"), 1.0);
        assert_eq!(exact_match("a", "b"), 0.0);
        assert_eq!(exact_match("", ""), 1.0);
    }

    #[test]
    fn rewards_need_references() {
        let t = Task::new("q", None);
        assert_eq!(ExactMatch.score(&t, "x"), Err(RewardError::MissingReference));
        let t = Task::new("q", Some("hello world".into()));
        assert_eq!(ChrfPlusPlus.score(&t, "hello world").unwrap().score, 100.0);
        assert!(builtin_reward("ChrF++").is_some());
        assert!(builtin_reward("bleu").is_none());
    }
}
