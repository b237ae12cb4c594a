//! Context trainers: best-of-n, sequential, and beam search with elitism.

mod config;
mod ledger;
mod sampler;
mod trainer;

pub use self::config::{TrainConfig, TrainMode};
pub use self::ledger::{Budget, LedgerEvent, PoolEntry, RunLedger};
pub use self::sampler::Sampler;
pub use self::trainer::{
    CandidateContext, LearnableBatch, RewardOutcome, RunOutcome, TrainError, Trainer, TrainerSetup,
    BEAM_ROOT_BRANCH, BEST_BRANCH, BON_BRANCH, NO_OP_SUMMARY, SEQ_BRANCH,
};
