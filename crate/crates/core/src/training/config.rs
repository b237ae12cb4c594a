use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::agents::PromptMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    /// One context updated linearly; the best validated checkpoint wins.
    Seq,
    /// Beam search with elitism.
    Beam,
    /// Best-of-n executor responses stored as context.
    Bon,
}

impl TrainMode {
    pub fn as_str(self) -> &'static str {
        match self {
            TrainMode::Seq => "seq",
            TrainMode::Beam => "beam",
            TrainMode::Bon => "bon",
        }
    }
}

impl fmt::Display for TrainMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TrainMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "seq" => Ok(TrainMode::Seq),
            "beam" => Ok(TrainMode::Beam),
            "bon" => Ok(TrainMode::Bon),
            other => Err(format!("unknown mode '{other}' (expected seq, beam or bon)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub mode: TrainMode,
    /// K: candidates kept after each selection.
    pub beam_width: usize,
    /// M: children forked from every beam member per step.
    pub branching_factor: usize,
    /// L: optimizer updates applied to each child before validation.
    pub steps_per_child: usize,
    pub epochs: usize,
    pub batch_size: usize,
    /// Hard cap on training steps; `None` runs until the epochs are used up.
    pub max_global_steps: Option<usize>,
    pub seed: u64,
    /// Gives the optimizer the Wikipedia and browser tools.
    pub info_seeking: bool,
    /// Samples per task in `bon` mode.
    pub best_of_n: usize,
    /// Start the beam with K copies of the empty context instead of one.
    pub replicate_initial_beam: bool,
    /// Prompt mode of the executor during validation.
    pub validation_mode: PromptMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: TrainMode::Beam,
            beam_width: 2,
            branching_factor: 3,
            steps_per_child: 1,
            epochs: 2,
            batch_size: 4,
            max_global_steps: None,
            seed: 0,
            info_seeking: false,
            best_of_n: 8,
            replicate_initial_beam: true,
            validation_mode: PromptMode::Inference,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), String> {
        for (key, value) in [
            ("beam_width", self.beam_width),
            ("branching_factor", self.branching_factor),
            ("steps_per_child", self.steps_per_child),
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("best_of_n", self.best_of_n),
        ] {
            if value == 0 {
                return Err(format!("{key} must be at least 1"));
            }
        }
        Ok(())
    }

    /// Optimizer calls a run makes when `steps` training steps complete.
    pub fn optimizer_calls_for(&self, steps: usize) -> usize {
        match self.mode {
            TrainMode::Seq => steps,
            TrainMode::Beam => {
                let first = if self.replicate_initial_beam { self.beam_width } else { 1 };
                let per_parent = self.branching_factor * self.steps_per_child;
                if steps == 0 {
                    0
                } else {
                    per_parent * (first + self.beam_width * (steps - 1))
                }
            }
            TrainMode::Bon => 0,
        }
    }
}
