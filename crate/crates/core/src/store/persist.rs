//! On-disk layout of a repository:
//!
//! ```text
//! <dir>/commits.log          one JSON commit per line, append-only
//! <dir>/snapshots/<id>.json  canonical snapshot bytes, named by their hash
//! <dir>/refs.json            branches, head, counters, embedding provider
//! ```

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::repository::{Branch, Commit, CommitId, Head, Repository};
use super::{ContextSnapshot, Resource, ResourceId, Result, SnapshotId, Source, StoreError};

pub const SNAPSHOT_FORMAT: &str = "ctxforge-snapshot/1";

/// Identity of the embedding provider a repository was built with.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderInfo {
    pub name: String,
    pub dim: usize,
}

impl ProviderInfo {
    pub fn new(name: impl Into<String>, dim: usize) -> Self {
        Self {
            name: name.into(),
            dim,
        }
    }
}

impl fmt::Display for ProviderInfo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (dim {})", self.name, self.dim)
    }
}

#[derive(Serialize, Deserialize)]
struct Refs {
    branches: BTreeMap<String, Branch>,
    head: Head,
    clock: u64,
    next_resource: u64,
    #[serde(default)]
    provider: Option<ProviderInfo>,
}

#[derive(Deserialize)]
struct StoredResource {
    content: String,
    id: ResourceId,
    keywords: BTreeSet<String>,
    source: Source,
    summary: String,
}

#[derive(Deserialize)]
struct StoredSnapshot {
    resources: Vec<StoredResource>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn json_err(path: &Path) -> impl FnOnce(serde_json::Error) -> StoreError + '_ {
    move |source| StoreError::Json {
        path: path.display().to_string(),
        source,
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

fn resource_from_stored(s: StoredResource) -> Resource {
    Resource {
        length: s.content.chars().count(),
        id: s.id,
        summary: s.summary,
        content: s.content,
        source: s.source,
        keywords: s.keywords,
        embedding: None,
    }
}

fn load_snapshot(path: &Path) -> Result<ContextSnapshot> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let stored: StoredSnapshot = serde_json::from_slice(&bytes).map_err(json_err(path))?;
    let snap = ContextSnapshot::new(stored.resources.into_iter().map(resource_from_stored).collect())?;
    let expected = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
    if snap.id().as_str() != expected {
        return Err(StoreError::Corrupt(format!(
            "snapshot {} hashes to {}",
            path.display(),
            snap.id()
        )));
    }
    Ok(snap)
}

impl Repository {
    /// Writes the repository under `dir`. New commits are appended to the
    /// log; already persisted commits must match what is in memory.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let snap_dir = dir.join("snapshots");
        fs::create_dir_all(&snap_dir).map_err(io_err(&snap_dir))?;
        for c in self.commits.values() {
            let path = snap_dir.join(format!("{}.json", c.snapshot));
            if !path.exists() {
                let snap = &self.snapshots[&c.snapshot];
                write_atomic(&path, &snap.canonical_bytes())?;
            }
        }

        let log_path = dir.join("commits.log");
        let existing = match fs::read_to_string(&log_path) {
            Ok(s) => s,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
            Err(e) => return Err(io_err(&log_path)(e)),
        };
        let persisted: Vec<&str> = existing.lines().filter(|l| !l.trim().is_empty()).collect();
        if persisted.len() > self.commits.len() {
            return Err(StoreError::Corrupt(format!(
                "{} holds more commits than the repository",
                log_path.display()
            )));
        }
        for (line, commit) in persisted.iter().zip(self.commits.values()) {
            let on_disk: Commit = serde_json::from_str(line).map_err(json_err(&log_path))?;
            if &on_disk != commit {
                return Err(StoreError::Corrupt(format!(
                    "{} diverges from the repository at commit {}",
                    log_path.display(),
                    on_disk.id
                )));
            }
        }
        let mut file = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&log_path)
            .map_err(io_err(&log_path))?;
        for commit in self.commits.values().skip(persisted.len()) {
            let line = serde_json::to_string(commit).map_err(json_err(&log_path))?;
            writeln!(file, "{line}").map_err(io_err(&log_path))?;
        }
        file.sync_all().map_err(io_err(&log_path))?;

        let refs = Refs {
            branches: self.branches.clone(),
            head: self.head.clone(),
            clock: self.clock,
            next_resource: self.next_resource,
            provider: self.provider.clone(),
        };
        let refs_path = dir.join("refs.json");
        let bytes = serde_json::to_vec_pretty(&refs).map_err(json_err(&refs_path))?;
        write_atomic(&refs_path, &bytes)
    }

    /// Loads a repository saved with [`Repository::save`], verifying commit
    /// and snapshot hashes.
    pub fn open(dir: &Path) -> Result<Repository> {
        let log_path = dir.join("commits.log");
        let log = fs::read_to_string(&log_path).map_err(io_err(&log_path))?;
        let mut commits = IndexMap::new();
        let mut snapshots: HashMap<SnapshotId, Arc<ContextSnapshot>> = HashMap::new();
        for line in log.lines().filter(|l| !l.trim().is_empty()) {
            let c: Commit = serde_json::from_str(line).map_err(json_err(&log_path))?;
            if !c.verify_id() {
                return Err(StoreError::Corrupt(format!("commit {} fails its hash", c.id)));
            }
            if !snapshots.contains_key(&c.snapshot) {
                let path = dir.join("snapshots").join(format!("{}.json", c.snapshot));
                snapshots.insert(c.snapshot.clone(), Arc::new(load_snapshot(&path)?));
            }
            commits.insert(c.id.clone(), c);
        }
        if commits.is_empty() {
            return Err(StoreError::Corrupt(format!("{} is empty", log_path.display())));
        }
        let refs_path = dir.join("refs.json");
        let refs_bytes = fs::read(&refs_path).map_err(io_err(&refs_path))?;
        let refs: Refs = serde_json::from_slice(&refs_bytes).map_err(json_err(&refs_path))?;
        let known = |id: &CommitId| commits.contains_key(id);
        for b in refs.branches.values() {
            if !known(&b.head) {
                return Err(StoreError::Corrupt(format!(
                    "branch '{}' points at unknown commit {}",
                    b.name, b.head
                )));
            }
        }
        match &refs.head {
            Head::Branch(b) if !refs.branches.contains_key(b) => {
                return Err(StoreError::Corrupt(format!("head names unknown branch '{b}'")))
            }
            Head::Detached(c) if !known(c) => {
                return Err(StoreError::Corrupt(format!("head at unknown commit {c}")))
            }
            _ => {}
        }
        Repository::from_parts(
            commits,
            snapshots,
            refs.branches,
            refs.head,
            refs.clock,
            refs.next_resource,
            refs.provider,
        )
    }

    /// Like [`Repository::open`] but refuses a repository built with a
    /// different embedding provider.
    pub fn open_with_provider(dir: &Path, provider: &ProviderInfo) -> Result<Repository> {
        let repo = Self::open(dir)?;
        if let Some(existing) = &repo.provider {
            if existing != provider {
                return Err(StoreError::ProviderMismatch {
                    expected: existing.to_string(),
                    found: provider.to_string(),
                });
            }
        }
        Ok(repo)
    }
}

#[derive(Serialize, Deserialize)]
struct DocResource {
    id: ResourceId,
    summary: String,
    content: String,
    source: Source,
    length: usize,
    keywords: BTreeSet<String>,
}

#[derive(Serialize, Deserialize)]
struct SnapshotDocument {
    format: String,
    snapshot_id: Option<SnapshotId>,
    resources: Vec<DocResource>,
}

/// Portable, human-readable JSON document of one snapshot.
pub fn snapshot_document(snapshot: &ContextSnapshot) -> String {
    let doc = SnapshotDocument {
        format: SNAPSHOT_FORMAT.to_string(),
        snapshot_id: Some(snapshot.id().clone()),
        resources: snapshot
            .resources()
            .iter()
            .map(|r| DocResource {
                id: r.id.clone(),
                summary: r.summary.clone(),
                content: r.content.clone(),
                source: r.source,
                length: r.length,
                keywords: r.keywords.clone(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&doc).expect("snapshot document serializes")
}

/// Parses and validates a snapshot document. A present `snapshot_id` must
/// match the recomputed hash.
pub fn read_snapshot_document(text: &str) -> Result<ContextSnapshot> {
    let doc: SnapshotDocument = serde_json::from_str(text).map_err(|source| StoreError::Json {
        path: "<snapshot document>".into(),
        source,
    })?;
    if doc.format != SNAPSHOT_FORMAT {
        return Err(StoreError::Corrupt(format!(
            "unsupported document format '{}'",
            doc.format
        )));
    }
    let resources = doc
        .resources
        .into_iter()
        .map(|d| Resource {
            id: d.id,
            summary: d.summary,
            content: d.content,
            source: d.source,
            length: d.length,
            keywords: d.keywords,
            embedding: None,
        })
        .collect();
    let snap = ContextSnapshot::new(resources)?;
    if let Some(id) = doc.snapshot_id {
        if &id != snap.id() {
            return Err(StoreError::Corrupt(format!(
                "document claims snapshot {id} but hashes to {}",
                snap.id()
            )));
        }
    }
    Ok(snap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::{ResourceField, MAIN_BRANCH};

    fn sample() -> Repository {
        let mut repo = Repository::new();
        let a = repo.add_resource("alpha facts", "a", Source::Web).unwrap();
        repo.add_resource("beta facts", "b", Source::Wikipedia).unwrap();
        repo.commit("two").unwrap();
        repo.create_branch("side", "experiment").unwrap();
        repo.checkout("side").unwrap();
        repo.update_resource(a.as_str(), ResourceField::Content, "alpha revised")
            .unwrap();
        repo.commit("revise").unwrap();
        repo
    }

    #[test]
    fn save_open_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let repo = sample();
        repo.save(dir.path()).unwrap();
        let back = Repository::open(dir.path()).unwrap();
        assert_eq!(back.head(), repo.head());
        assert_eq!(back.working_snapshot_id(), repo.working_snapshot_id());
        assert_eq!(back.list_branches(), repo.list_branches());
        assert_eq!(back.commits().count(), repo.commits().count());
    }

    #[test]
    fn save_is_incremental_and_detects_divergence() {
        let dir = tempfile::tempdir().unwrap();
        let mut repo = sample();
        repo.save(dir.path()).unwrap();
        repo.commit("more").unwrap();
        repo.save(dir.path()).unwrap();
        let back = Repository::open(dir.path()).unwrap();
        assert_eq!(back.head_commit().message, "more");

        let other = Repository::new();
        let mut other = other;
        other.commit("unrelated").unwrap();
        assert!(matches!(
            other.save(dir.path()),
            Err(StoreError::Corrupt(_))
        ));
    }

    #[test]
    fn tampered_snapshot_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let repo = sample();
        repo.save(dir.path()).unwrap();
        let sid = repo.head_commit().snapshot.clone();
        let path = dir.path().join("snapshots").join(format!("{sid}.json"));
        let text = fs::read_to_string(&path).unwrap().replace("revised", "forged");
        fs::write(&path, text).unwrap();
        assert!(matches!(
            Repository::open(dir.path()),
            Err(StoreError::Corrupt(_))
        ));
    }

    #[test]
    fn provider_mismatch_refused() {
        let dir = tempfile::tempdir().unwrap();
        let mut repo = sample();
        let info = ProviderInfo::new("hash", 2);
        repo.flush_embeddings(&info, |_| Ok::<_, ()>(vec![1.0, 0.0]))
            .unwrap();
        repo.save(dir.path()).unwrap();
        assert!(Repository::open_with_provider(dir.path(), &info).is_ok());
        let err = Repository::open_with_provider(dir.path(), &ProviderInfo::new("other", 2))
            .unwrap_err();
        assert!(matches!(err, StoreError::ProviderMismatch { .. }));
    }

    #[test]
    fn document_roundtrip_and_validation() {
        let repo = sample();
        let snap = repo.snapshot_of(repo.head_commit_id()).unwrap();
        let doc = snapshot_document(&snap);
        let back = read_snapshot_document(&doc).unwrap();
        assert_eq!(back.id(), snap.id());

        let forged = doc.replace("\"length\": 13", "\"length\": 14");
        assert!(read_snapshot_document(&forged).is_err());

        let mut imported = Repository::new();
        imported.import_snapshot(back, MAIN_BRANCH, "import").unwrap();
        let fresh = imported.add_resource("new", "s", Source::Web).unwrap();
        assert!(snap.get(fresh.as_str()).is_none(), "ids must not collide");
    }
}
