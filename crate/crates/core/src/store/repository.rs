use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::persist::ProviderInfo;
use super::{
    extract_keywords, ContextSnapshot, Embedding, Resource, ResourceField, ResourceId, Result,
    SnapshotId, Source, StoreError, MERGE_SEPARATOR,
};

pub const MAIN_BRANCH: &str = "main";
pub const DEFAULT_PREVIEW_CHARS: usize = 200;
pub const TRUNCATION_MARKER: &str = "...[truncated]";

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CommitId(String);

impl CommitId {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn short(&self) -> &str {
        &self.0[..self.0.len().min(10)]
    }
}

impl fmt::Display for CommitId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Commit {
    pub id: CommitId,
    pub parents: Vec<CommitId>,
    pub snapshot: SnapshotId,
    pub message: String,
    /// Logical clock of the repository; strictly increasing per commit.
    pub timestamp: u64,
}

impl Commit {
    pub(crate) fn compute_id(
        parents: &[CommitId],
        snapshot: &SnapshotId,
        message: &str,
        timestamp: u64,
    ) -> CommitId {
        #[derive(Serialize)]
        struct Canonical<'a> {
            message: &'a str,
            parents: &'a [CommitId],
            snapshot: &'a SnapshotId,
            timestamp: u64,
        }
        let bytes = serde_json::to_vec(&Canonical {
            message,
            parents,
            snapshot,
            timestamp,
        })
        .expect("commit serializes");
        CommitId(crate::sha256_hex(&bytes))
    }

    pub fn verify_id(&self) -> bool {
        Self::compute_id(&self.parents, &self.snapshot, &self.message, self.timestamp) == self.id
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Branch {
    pub name: String,
    pub head: CommitId,
    pub description: String,
    pub metadata: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "target")]
pub enum Head {
    Branch(String),
    Detached(CommitId),
}

/// How much of each resource `list_resources` shows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetailLevel {
    /// id, summary and length.
    Summary,
    /// Summary plus the first few hundred characters of content.
    Preview,
    /// Full content.
    Detail,
}

impl FromStr for DetailLevel {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "summary" => Ok(DetailLevel::Summary),
            "preview" => Ok(DetailLevel::Preview),
            "detail" | "full" => Ok(DetailLevel::Detail),
            other => Err(format!(
                "unknown detail level '{other}' (expected summary, preview or detail)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ListingEntry {
    pub id: ResourceId,
    pub summary: String,
    pub length: usize,
    /// Content preview or full content, depending on the detail level.
    pub text: Option<String>,
    pub truncated: bool,
}

impl ListingEntry {
    pub fn render(&self) -> String {
        let head = format!("[{}] {} (length {})", self.id, self.summary, self.length);
        match &self.text {
            None => head,
            Some(text) => format!("{head}\n{text}"),
        }
    }
}

/// A branch/commit graph over context snapshots plus the working state of
/// the checked-out branch.
///
/// Writes are single-writer (`&mut self`); committed snapshots are shared
/// immutably and may be read from anywhere.
#[derive(Debug, Clone)]
pub struct Repository {
    pub(crate) commits: IndexMap<CommitId, Commit>,
    pub(crate) snapshots: HashMap<SnapshotId, Arc<ContextSnapshot>>,
    pub(crate) branches: BTreeMap<String, Branch>,
    pub(crate) head: Head,
    pub(crate) working: Vec<Resource>,
    pub(crate) clock: u64,
    pub(crate) next_resource: u64,
    pub(crate) provider: Option<ProviderInfo>,
    embedding_cache: HashMap<String, Embedding>,
    preview_chars: usize,
}

impl Default for Repository {
    fn default() -> Self {
        Self::new()
    }
}

impl Repository {
    /// New repository whose `main` branch points at a root commit of the
    /// empty snapshot.
    pub fn new() -> Self {
        let empty = ContextSnapshot::empty();
        let root = Commit {
            id: Commit::compute_id(&[], empty.id(), "init", 0),
            parents: Vec::new(),
            snapshot: empty.id().clone(),
            message: "init".to_string(),
            timestamp: 0,
        };
        let mut repo = Self {
            commits: IndexMap::new(),
            snapshots: HashMap::new(),
            branches: BTreeMap::new(),
            head: Head::Branch(MAIN_BRANCH.to_string()),
            working: Vec::new(),
            clock: 1,
            next_resource: 1,
            provider: None,
            embedding_cache: HashMap::new(),
            preview_chars: DEFAULT_PREVIEW_CHARS,
        };
        repo.snapshots.insert(empty.id().clone(), Arc::new(empty));
        repo.branches.insert(
            MAIN_BRANCH.to_string(),
            Branch {
                name: MAIN_BRANCH.to_string(),
                head: root.id.clone(),
                description: "initial empty context".to_string(),
                metadata: BTreeMap::new(),
            },
        );
        repo.commits.insert(root.id.clone(), root);
        repo
    }

    pub(crate) fn from_parts(
        commits: IndexMap<CommitId, Commit>,
        snapshots: HashMap<SnapshotId, Arc<ContextSnapshot>>,
        branches: BTreeMap<String, Branch>,
        head: Head,
        clock: u64,
        next_resource: u64,
        provider: Option<ProviderInfo>,
    ) -> Result<Self> {
        let mut repo = Self {
            commits,
            snapshots,
            branches,
            head,
            working: Vec::new(),
            clock,
            next_resource,
            provider,
            embedding_cache: HashMap::new(),
            preview_chars: DEFAULT_PREVIEW_CHARS,
        };
        repo.topological_order()?;
        let head_commit = repo.head_commit_id().clone();
        repo.working = repo.snapshot_of(&head_commit)?.resources().to_vec();
        Ok(repo)
    }

    pub fn with_preview_chars(mut self, chars: usize) -> Self {
        self.preview_chars = chars;
        self
    }

    pub fn preview_chars(&self) -> usize {
        self.preview_chars
    }

    pub fn set_preview_chars(&mut self, chars: usize) {
        self.preview_chars = chars;
    }

    // ----- resource editing -------------------------------------------------

    fn ensure_writable(&self) -> Result<()> {
        match &self.head {
            Head::Branch(_) => Ok(()),
            Head::Detached(c) => Err(StoreError::DetachedHead(c.short().to_string())),
        }
    }

    fn position(&self, id: &str) -> Result<usize> {
        self.working
            .iter()
            .position(|r| r.id.as_str() == id)
            .ok_or_else(|| StoreError::NoSuchResource(id.to_string()))
    }

    fn mint_id(&mut self) -> ResourceId {
        let id = ResourceId::new(format!("r{}", self.next_resource));
        self.next_resource += 1;
        id
    }

    /// Appends a new resource and returns its id. Embedding is deferred.
    pub fn add_resource(
        &mut self,
        content: &str,
        summary: &str,
        source: Source,
    ) -> Result<ResourceId> {
        self.ensure_writable()?;
        if content.is_empty() {
            return Err(StoreError::EmptyContent);
        }
        let id = self.mint_id();
        self.working.push(Resource::new(
            id.clone(),
            content.to_string(),
            summary.to_string(),
            source,
        ));
        Ok(id)
    }

    pub fn update_resource(&mut self, id: &str, field: ResourceField, value: &str) -> Result<()> {
        self.ensure_writable()?;
        let pos = self.position(id)?;
        let resource = &mut self.working[pos];
        match field {
            ResourceField::Content => {
                if value.is_empty() {
                    return Err(StoreError::EmptyContent);
                }
                resource.set_content(value.to_string());
            }
            ResourceField::Summary => resource.set_summary(value.to_string()),
            ResourceField::Keywords => {
                let keywords: std::collections::BTreeSet<String> = value
                    .split(|c: char| c == ',' || c.is_whitespace())
                    .filter(|t| !t.is_empty())
                    .map(str::to_lowercase)
                    .collect();
                if keywords.is_empty() {
                    return Err(StoreError::InvalidResource {
                        id: id.to_string(),
                        reason: "keywords must be nonempty for nonempty content".into(),
                    });
                }
                resource.keywords = keywords;
            }
        }
        Ok(())
    }

    /// Removes a resource from the working state; earlier commits keep it.
    pub fn remove_resource(&mut self, id: &str) -> Result<Resource> {
        self.ensure_writable()?;
        let pos = self.position(id)?;
        Ok(self.working.remove(pos))
    }

    /// Alias of [`Repository::remove_resource`].
    pub fn delete_resource(&mut self, id: &str) -> Result<Resource> {
        self.remove_resource(id)
    }

    pub fn swap_resources(&mut self, a: &str, b: &str) -> Result<()> {
        self.ensure_writable()?;
        let pa = self.position(a)?;
        let pb = self.position(b)?;
        self.working.swap(pa, pb);
        Ok(())
    }

    /// Replaces `a` and `b` with one resource at `a`'s position whose content
    /// is `a`'s content, the merge separator, then `b`'s content.
    pub fn merge_resources(&mut self, a: &str, b: &str, merged_summary: &str) -> Result<ResourceId> {
        self.ensure_writable()?;
        if a == b {
            return Err(StoreError::SelfMerge(a.to_string()));
        }
        let pa = self.position(a)?;
        let pb = self.position(b)?;
        let content = format!(
            "{}{}{}",
            self.working[pa].content, MERGE_SEPARATOR, self.working[pb].content
        );
        let source = self.working[pa].source;
        let id = self.mint_id();
        let merged = Resource::new(id.clone(), content, merged_summary.to_string(), source);
        self.working[pa] = merged;
        self.working.remove(pb);
        Ok(id)
    }

    pub fn get_resource(&self, id: &str) -> Result<&Resource> {
        self.position(id).map(|p| &self.working[p])
    }

    pub fn resources(&self) -> &[Resource] {
        &self.working
    }

    pub fn list_resources(&self, detail: DetailLevel, limit: Option<usize>) -> Vec<ListingEntry> {
        let limit = limit.unwrap_or(usize::MAX);
        self.working
            .iter()
            .take(limit)
            .map(|r| self.listing_entry(r, detail))
            .collect()
    }

    pub fn listing_entry(&self, r: &Resource, detail: DetailLevel) -> ListingEntry {
        let (text, truncated) = match detail {
            DetailLevel::Summary => (None, false),
            DetailLevel::Preview => {
                let (t, cut) = preview(&r.content, self.preview_chars);
                (Some(t), cut)
            }
            DetailLevel::Detail => (Some(r.content.clone()), false),
        };
        ListingEntry {
            id: r.id.clone(),
            summary: r.summary.clone(),
            length: r.length,
            text,
            truncated,
        }
    }

    /// Snapshot id the working state would commit to.
    pub fn working_snapshot_id(&self) -> SnapshotId {
        ContextSnapshot::compute_id(&self.working)
    }

    pub fn working_snapshot(&self) -> ContextSnapshot {
        ContextSnapshot::new(self.working.clone()).expect("working state keeps invariants")
    }

    pub fn is_dirty(&self) -> bool {
        let head = self.head_commit();
        self.working_snapshot_id() != head.snapshot
    }

    // ----- embeddings -------------------------------------------------------

    pub fn embedding_provider(&self) -> Option<&ProviderInfo> {
        self.provider.as_ref()
    }

    /// Records the provider used for embeddings; a repository never mixes
    /// providers.
    pub fn bind_provider(&mut self, info: &ProviderInfo) -> Result<()> {
        match &self.provider {
            Some(existing) if existing != info => Err(StoreError::ProviderMismatch {
                expected: existing.to_string(),
                found: info.to_string(),
            }),
            Some(_) => Ok(()),
            None => {
                self.provider = Some(info.clone());
                Ok(())
            }
        }
    }

    /// Fills missing embeddings of the working state with `embed`, reusing
    /// cached vectors for content seen before. Embeddings are derived data,
    /// so this is allowed on a detached head. Returns how many were computed.
    pub fn flush_embeddings<E>(
        &mut self,
        info: &ProviderInfo,
        mut embed: impl FnMut(&str) -> std::result::Result<Vec<f64>, E>,
    ) -> std::result::Result<usize, FlushError<E>> {
        self.bind_provider(info).map_err(FlushError::Store)?;
        let mut computed = 0;
        for r in self.working.iter_mut().filter(|r| r.embedding.is_none()) {
            let key = crate::sha256_hex(r.content.as_bytes());
            let emb = match self.embedding_cache.get(&key) {
                Some(e) => e.clone(),
                None => {
                    let v = embed(&r.content).map_err(FlushError::Provider)?;
                    if v.len() != info.dim {
                        return Err(FlushError::Store(StoreError::DimensionMismatch {
                            id: r.id.to_string(),
                            expected: info.dim,
                            found: v.len(),
                        }));
                    }
                    computed += 1;
                    let e = Embedding(v);
                    self.embedding_cache.insert(key, e.clone());
                    e
                }
            };
            r.embedding = Some(emb);
        }
        Ok(computed)
    }

    // ----- version control --------------------------------------------------

    pub fn head(&self) -> &Head {
        &self.head
    }

    pub fn current_branch(&self) -> Option<&str> {
        match &self.head {
            Head::Branch(b) => Some(b),
            Head::Detached(_) => None,
        }
    }

    pub fn head_commit_id(&self) -> &CommitId {
        match &self.head {
            Head::Branch(b) => &self.branches[b].head,
            Head::Detached(c) => c,
        }
    }

    pub fn head_commit(&self) -> &Commit {
        &self.commits[self.head_commit_id()]
    }

    fn next_tick(&mut self) -> u64 {
        let t = self.clock;
        self.clock += 1;
        t
    }

    fn store_snapshot(&mut self, resources: Vec<Resource>) -> Result<SnapshotId> {
        let snap = ContextSnapshot::new(resources)?;
        let id = snap.id().clone();
        self.snapshots.entry(id.clone()).or_insert_with(|| Arc::new(snap));
        Ok(id)
    }

    fn push_commit(&mut self, parents: Vec<CommitId>, snapshot: SnapshotId, message: &str) -> CommitId {
        let timestamp = self.next_tick();
        let id = Commit::compute_id(&parents, &snapshot, message, timestamp);
        self.commits.insert(
            id.clone(),
            Commit {
                id: id.clone(),
                parents,
                snapshot,
                message: message.to_string(),
                timestamp,
            },
        );
        id
    }

    /// Snapshots the working state onto the checked-out branch. Empty-diff
    /// commits are allowed.
    pub fn commit(&mut self, message: &str) -> Result<CommitId> {
        let branch = match &self.head {
            Head::Branch(b) => b.clone(),
            Head::Detached(c) => return Err(StoreError::DetachedHead(c.short().to_string())),
        };
        let snapshot = self.store_snapshot(self.working.clone())?;
        let parent = self.branches[&branch].head.clone();
        let id = self.push_commit(vec![parent], snapshot, message);
        self.branches.get_mut(&branch).expect("branch exists").head = id.clone();
        Ok(id)
    }

    /// Forks the current head into a new branch without switching to it.
    pub fn create_branch(&mut self, name: &str, description: &str) -> Result<()> {
        if name.trim().is_empty() || name.chars().any(char::is_whitespace) {
            return Err(StoreError::InvalidBranchName(name.to_string()));
        }
        if self.branches.contains_key(name) {
            return Err(StoreError::DuplicateBranch(name.to_string()));
        }
        let head = self.head_commit_id().clone();
        self.branches.insert(
            name.to_string(),
            Branch {
                name: name.to_string(),
                head,
                description: description.to_string(),
                metadata: BTreeMap::new(),
            },
        );
        Ok(())
    }

    /// Resolves a branch name, full commit id, or unique commit-id prefix.
    pub fn resolve(&self, target: &str) -> Result<CommitId> {
        if let Some(b) = self.branches.get(target) {
            return Ok(b.head.clone());
        }
        if let Some(c) = self.commits.get(&CommitId(target.to_string())) {
            return Ok(c.id.clone());
        }
        if target.len() >= 4 {
            let mut hits = self.commits.keys().filter(|c| c.0.starts_with(target));
            if let Some(first) = hits.next() {
                if hits.next().is_some() {
                    return Err(StoreError::AmbiguousTarget(target.to_string()));
                }
                return Ok(first.clone());
            }
        }
        Err(StoreError::UnknownTarget(target.to_string()))
    }

    /// Switches to a branch (writable) or a commit (detached, read-only).
    /// Uncommitted edits are discarded.
    pub fn checkout(&mut self, target: &str) -> Result<()> {
        let (head, commit) = if let Some(b) = self.branches.get(target) {
            (Head::Branch(target.to_string()), b.head.clone())
        } else {
            let c = self.resolve(target)?;
            (Head::Detached(c.clone()), c)
        };
        self.working = self.snapshot_of(&commit)?.resources().to_vec();
        self.head = head;
        Ok(())
    }

    /// Merges `source` into `target` with a two-parent commit whose snapshot
    /// is target's resources followed by source-only resources. On an id
    /// collision with different data the target version is kept and the
    /// conflict is listed in the commit message.
    pub fn merge_branch(&mut self, source: &str, target: &str) -> Result<CommitId> {
        if source == target {
            return Err(StoreError::SelfBranchMerge(source.to_string()));
        }
        let src = self
            .branches
            .get(source)
            .ok_or_else(|| StoreError::UnknownBranch(source.to_string()))?
            .head
            .clone();
        let tgt = self
            .branches
            .get(target)
            .ok_or_else(|| StoreError::UnknownBranch(target.to_string()))?
            .head
            .clone();
        let src_snap = self.snapshot_of(&src)?;
        let tgt_snap = self.snapshot_of(&tgt)?;
        let mut merged: Vec<Resource> = tgt_snap.resources().to_vec();
        let mut conflicts = Vec::new();
        for r in src_snap.resources() {
            match tgt_snap.get(r.id.as_str()) {
                None => merged.push(r.clone()),
                Some(existing) => {
                    if existing.content != r.content
                        || existing.summary != r.summary
                        || existing.keywords != r.keywords
                        || existing.source != r.source
                    {
                        conflicts.push(r.id.to_string());
                    }
                }
            }
        }
        let mut message = format!("Merge branch '{source}' into '{target}'");
        if !conflicts.is_empty() {
            message.push_str(&format!("\nconflicts (target kept): {}", conflicts.join(", ")));
        }
        let snapshot = self.store_snapshot(merged)?;
        let id = self.push_commit(vec![tgt, src], snapshot, &message);
        if let Err(e) = self.topological_order() {
            self.commits.shift_remove(&id);
            return Err(e);
        }
        self.branches.get_mut(target).expect("target exists").head = id.clone();
        if self.current_branch() == Some(target) {
            self.working = self.snapshot_of(&id)?.resources().to_vec();
        }
        Ok(id)
    }

    pub fn update_branch_info(&mut self, name: &str, key: &str, value: &str) -> Result<()> {
        let branch = self
            .branches
            .get_mut(name)
            .ok_or_else(|| StoreError::UnknownBranch(name.to_string()))?;
        if key == "description" {
            branch.description = value.to_string();
        } else {
            branch.metadata.insert(key.to_string(), value.to_string());
        }
        Ok(())
    }

    pub fn list_branches(&self) -> Vec<&Branch> {
        self.branches.values().collect()
    }

    pub fn branch(&self, name: &str) -> Result<&Branch> {
        self.branches
            .get(name)
            .ok_or_else(|| StoreError::UnknownBranch(name.to_string()))
    }

    pub fn commit_by_id(&self, id: &CommitId) -> Option<&Commit> {
        self.commits.get(id)
    }

    /// Every commit, in creation order.
    pub fn commits(&self) -> impl Iterator<Item = &Commit> {
        self.commits.values()
    }

    pub fn snapshot(&self, id: &SnapshotId) -> Option<&Arc<ContextSnapshot>> {
        self.snapshots.get(id)
    }

    pub fn snapshot_of(&self, commit: &CommitId) -> Result<Arc<ContextSnapshot>> {
        let c = self
            .commits
            .get(commit)
            .ok_or_else(|| StoreError::UnknownTarget(commit.to_string()))?;
        self.snapshots
            .get(&c.snapshot)
            .cloned()
            .ok_or_else(|| StoreError::Corrupt(format!("missing snapshot {}", c.snapshot)))
    }

    /// First-parent history of `target`, newest first.
    pub fn log(&self, target: &str) -> Result<Vec<&Commit>> {
        let mut cur = Some(self.resolve(target)?);
        let mut out = Vec::new();
        while let Some(id) = cur {
            let c = &self.commits[&id];
            out.push(c);
            cur = c.parents.first().cloned();
        }
        Ok(out)
    }

    /// Kahn's algorithm over the parent graph; errors on a cycle.
    pub fn topological_order(&self) -> Result<Vec<CommitId>> {
        let mut indegree: HashMap<&CommitId, usize> = HashMap::new();
        let mut children: HashMap<&CommitId, Vec<&CommitId>> = HashMap::new();
        for c in self.commits.values() {
            indegree.entry(&c.id).or_insert(0);
            for p in &c.parents {
                if !self.commits.contains_key(p) {
                    return Err(StoreError::Corrupt(format!(
                        "commit {} has unknown parent {p}",
                        c.id
                    )));
                }
                *indegree.entry(&c.id).or_insert(0) += 1;
                children.entry(p).or_default().push(&c.id);
            }
        }
        let mut queue: VecDeque<&CommitId> = self
            .commits
            .keys()
            .filter(|id| indegree[id] == 0)
            .collect();
        let mut order = Vec::with_capacity(self.commits.len());
        while let Some(id) = queue.pop_front() {
            order.push(id.clone());
            for child in children.get(id).map(Vec::as_slice).unwrap_or(&[]) {
                let d = indegree.get_mut(child).expect("known commit");
                *d -= 1;
                if *d == 0 {
                    queue.push_back(child);
                }
            }
        }
        if order.len() != self.commits.len() {
            return Err(StoreError::CycleDetected);
        }
        Ok(order)
    }

    /// Adds `snapshot` as a new commit on `branch` (created from the root
    /// commit when missing) and returns the commit id.
    pub fn import_snapshot(
        &mut self,
        snapshot: ContextSnapshot,
        branch: &str,
        message: &str,
    ) -> Result<CommitId> {
        for r in snapshot.resources() {
            if let Some(n) = r.id.sequence() {
                self.next_resource = self.next_resource.max(n + 1);
            }
        }
        if !self.branches.contains_key(branch) {
            let root = self.commits.keys().next().expect("root commit").clone();
            if branch.trim().is_empty() || branch.chars().any(char::is_whitespace) {
                return Err(StoreError::InvalidBranchName(branch.to_string()));
            }
            self.branches.insert(
                branch.to_string(),
                Branch {
                    name: branch.to_string(),
                    head: root,
                    description: "imported snapshot".to_string(),
                    metadata: BTreeMap::new(),
                },
            );
        }
        let parent = self.branches[branch].head.clone();
        let sid = snapshot.id().clone();
        self.snapshots
            .entry(sid.clone())
            .or_insert_with(|| Arc::new(snapshot));
        let id = self.push_commit(vec![parent], sid, message);
        self.branches.get_mut(branch).expect("branch exists").head = id.clone();
        if self.current_branch() == Some(branch) {
            self.working = self.snapshot_of(&id)?.resources().to_vec();
        }
        Ok(id)
    }

    /// Recomputes keywords of every working resource; used after imports of
    /// foreign documents.
    pub fn refresh_keywords(&mut self) -> Result<()> {
        self.ensure_writable()?;
        for r in &mut self.working {
            r.keywords = extract_keywords(&r.content, &r.summary);
        }
        Ok(())
    }

    /// Distinct resource-id sets seen across all branches heads; used by
    /// inspection tooling.
    pub fn resource_ids_at(&self, target: &str) -> Result<BTreeSet<ResourceId>> {
        let c = self.resolve(target)?;
        Ok(self
            .snapshot_of(&c)?
            .resources()
            .iter()
            .map(|r| r.id.clone())
            .collect())
    }
}

#[derive(Debug)]
pub enum FlushError<E> {
    Store(StoreError),
    Provider(E),
}

/// First `chars` characters of `text` plus the truncation marker when cut.
pub(crate) fn preview(text: &str, chars: usize) -> (String, bool) {
    let mut it = text.char_indices();
    match it.nth(chars) {
        None => (text.to_string(), false),
        Some((byte, _)) => (format!("{}{}", &text[..byte], TRUNCATION_MARKER), true),
    }
}
