//! Context training for frozen-weight task executors.
//!
//! The crate treats an agent's working context as a versioned set of
//! resources and optimizes it with LLM-driven edits instead of weight
//! updates. The pieces:
//!
//! - [`store`]: resources, snapshots and the branch/commit repository.
//! - [`retrieval`]: keyword, embedding and sub-agent search over a context.
//! - [`agents`]: chat backends, prompt rendering, the action-blob protocol
//!   and the agent loop.
//! - [`tools`]: the tool registry and every tool exposed to agents.
//! - [`training`]: best-of-n, sequential and beam-search trainers.
//! - [`evaluation`]: reward functions (chrF++, exact match) and held-out
//!   evaluation.
//! - [`sim`]: synthetic fact worlds and scripted agents for offline runs.

#![forbid(unsafe_code)]

pub mod agents;
pub mod evaluation;
pub mod retrieval;
pub mod sim;
pub mod store;
pub mod tools;
pub mod training;

pub(crate) fn sha256(bytes: &[u8]) -> [u8; 32] {
    use sha2::{Digest, Sha256};
    Sha256::digest(bytes).into()
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(sha256(bytes))
}
