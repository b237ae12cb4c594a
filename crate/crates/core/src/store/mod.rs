//! Versioned context storage.
//!
//! A context is an ordered list of [`Resource`]s. Every context lives in a
//! [`Repository`] that records immutable [`ContextSnapshot`]s in a commit
//! graph with named branches, so trainers can fork, score and restore
//! context states. A [`Workspace`] holds several repositories and tracks
//! which one tools currently address.

mod persist;
mod repository;
mod resource;
mod snapshot;
mod workspace;

pub use self::persist::{read_snapshot_document, snapshot_document, ProviderInfo};
pub use self::repository::{
    Branch, Commit, CommitId, DetailLevel, FlushError, Head, ListingEntry, Repository, DEFAULT_PREVIEW_CHARS,
    MAIN_BRANCH, TRUNCATION_MARKER,
};
pub use self::resource::{
    extract_keywords, tokenize, Embedding, Resource, ResourceField, ResourceId, Source,
};
pub use self::snapshot::{canonical_bytes, ContextSnapshot, SnapshotId};
pub use self::workspace::{ContextId, Workspace};

use thiserror::Error;

/// Separator placed between the two contents of a merged resource.
pub const MERGE_SEPARATOR: &str = "\n---\n";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("empty content: a resource must carry some text")]
    EmptyContent,
    #[error("no such resource: {0}")]
    NoSuchResource(String),
    #[error("resource field '{0}' is immutable")]
    ImmutableField(String),
    #[error("unknown resource field '{0}' (expected content, summary or keywords)")]
    UnknownField(String),
    #[error("cannot merge resource {0} with itself")]
    SelfMerge(String),
    #[error("duplicate resource id {0}")]
    DuplicateResource(String),
    #[error("invalid resource {id}: {reason}")]
    InvalidResource { id: String, reason: String },
    #[error("branch '{0}' already exists")]
    DuplicateBranch(String),
    #[error("invalid branch name '{0}'")]
    InvalidBranchName(String),
    #[error("unknown branch '{0}'")]
    UnknownBranch(String),
    #[error("unknown checkout target '{0}'")]
    UnknownTarget(String),
    #[error("ambiguous commit prefix '{0}'")]
    AmbiguousTarget(String),
    #[error("cannot merge branch '{0}' into itself")]
    SelfBranchMerge(String),
    #[error("detached head at {0}: checkout a branch before editing or committing")]
    DetachedHead(String),
    #[error("commit graph contains a cycle")]
    CycleDetected,
    #[error("no active context")]
    NoActiveContext,
    #[error("unknown context id '{0}'")]
    UnknownContext(String),
    #[error("embedding provider mismatch: repository uses {expected}, got {found}")]
    ProviderMismatch { expected: String, found: String },
    #[error("embedding dimension mismatch for {id}: expected {expected}, got {found}")]
    DimensionMismatch { id: String, expected: usize, found: usize },
    #[error("corrupt repository: {0}")]
    Corrupt(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed document {path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T, E = StoreError> = std::result::Result<T, E>;
