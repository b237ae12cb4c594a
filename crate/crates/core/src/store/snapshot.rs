use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{Resource, StoreError};

/// Content hash of a snapshot (hex SHA-256 of its canonical serialization).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SnapshotId(String);

impl SnapshotId {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn short(&self) -> &str {
        &self.0[..self.0.len().min(12)]
    }

    /// Accepts a full lowercase hex SHA-256 digest, as printed by `Display`.
    pub fn parse(s: &str) -> Option<Self> {
        (s.len() == 64 && s.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b)))
            .then(|| Self(s.to_string()))
    }
}

impl fmt::Display for SnapshotId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

// Field order here is the canonical (alphabetical) order.
#[derive(Serialize)]
struct CanonicalResource<'a> {
    content: &'a str,
    id: &'a str,
    keywords: Vec<&'a str>,
    source: &'a str,
    summary: &'a str,
}

#[derive(Serialize)]
struct CanonicalSnapshot<'a> {
    resources: Vec<CanonicalResource<'a>>,
}

/// Canonical serialization of an ordered resource list.
///
/// Covers ids, contents, summaries, sources and keywords in list order.
/// Derived data (length, embedding) is excluded.
pub fn canonical_bytes(resources: &[Resource]) -> Vec<u8> {
    let doc = CanonicalSnapshot {
        resources: resources
            .iter()
            .map(|r| CanonicalResource {
                content: &r.content,
                id: r.id.as_str(),
                keywords: r.keywords.iter().map(String::as_str).collect(),
                source: r.source.as_str(),
                summary: &r.summary,
            })
            .collect(),
    };
    serde_json::to_vec(&doc).expect("canonical snapshot serializes")
}

/// Immutable, content-addressed state of a context.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextSnapshot {
    id: SnapshotId,
    resources: Vec<Resource>,
}

impl ContextSnapshot {
    /// Builds a snapshot, dropping cached embeddings and checking invariants.
    pub fn new(mut resources: Vec<Resource>) -> Result<Self, StoreError> {
        let mut seen = HashSet::new();
        for r in &mut resources {
            r.embedding = None;
            r.validate()?;
            if !seen.insert(r.id.clone()) {
                return Err(StoreError::DuplicateResource(r.id.to_string()));
            }
        }
        let id = Self::compute_id(&resources);
        Ok(Self { id, resources })
    }

    pub fn empty() -> Self {
        Self::new(Vec::new()).expect("empty snapshot is valid")
    }

    pub fn compute_id(resources: &[Resource]) -> SnapshotId {
        SnapshotId(crate::sha256_hex(&canonical_bytes(resources)))
    }

    pub fn id(&self) -> &SnapshotId {
        &self.id
    }

    pub fn resources(&self) -> &[Resource] {
        &self.resources
    }

    pub fn len(&self) -> usize {
        self.resources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.resources.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Resource> {
        self.resources.iter().find(|r| r.id.as_str() == id)
    }

    pub fn canonical_bytes(&self) -> Vec<u8> {
        canonical_bytes(&self.resources)
    }
}
