use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::StoreError;

/// Opaque identifier of a resource, unique within a repository.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ResourceId(String);

impl ResourceId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Numeric suffix of ids minted by a repository (`r17` -> 17).
    pub(crate) fn sequence(&self) -> Option<u64> {
        self.0.strip_prefix('r').and_then(|n| n.parse().ok())
    }
}

impl fmt::Display for ResourceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ResourceId {
    fn from(s: &str) -> Self {
        Self(s.to_string())
    }
}

/// Where a resource came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Source {
    OptimizerAuthored,
    Wikipedia,
    Web,
    Imported,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::OptimizerAuthored => "optimizer-authored",
            Source::Wikipedia => "wikipedia",
            Source::Web => "web",
            Source::Imported => "imported",
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Source {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "optimizer-authored" | "optimizer" => Ok(Source::OptimizerAuthored),
            "wikipedia" | "wiki" => Ok(Source::Wikipedia),
            "web" | "browser" => Ok(Source::Web),
            "imported" => Ok(Source::Imported),
            other => Err(format!(
                "unknown source '{other}' (expected optimizer-authored, wikipedia, web or imported)"
            )),
        }
    }
}

/// Dense text embedding attached to a resource once the provider has run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Embedding(pub Vec<f64>);

impl Embedding {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// One atomic context item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Resource {
    pub id: ResourceId,
    pub summary: String,
    pub content: String,
    pub source: Source,
    /// Character count of `content`.
    pub length: usize,
    pub keywords: BTreeSet<String>,
    /// `None` until the embedding provider has been flushed over the context.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Embedding>,
}

impl Resource {
    pub(crate) fn new(id: ResourceId, content: String, summary: String, source: Source) -> Self {
        let keywords = extract_keywords(&content, &summary);
        Self {
            id,
            length: content.chars().count(),
            summary,
            content,
            source,
            keywords,
            embedding: None,
        }
    }

    pub(crate) fn set_content(&mut self, content: String) {
        self.length = content.chars().count();
        self.content = content;
        self.keywords = extract_keywords(&self.content, &self.summary);
        self.embedding = None;
    }

    pub(crate) fn set_summary(&mut self, summary: String) {
        self.summary = summary;
        self.keywords = extract_keywords(&self.content, &self.summary);
    }

    /// True when the embedding must be recomputed before embedding search.
    pub fn embedding_stale(&self) -> bool {
        self.embedding.is_none()
    }

    /// Checks the per-resource invariants.
    pub fn validate(&self) -> Result<(), StoreError> {
        let fail = |reason: String| StoreError::InvalidResource {
            id: self.id.to_string(),
            reason,
        };
        if self.id.as_str().is_empty() {
            return Err(fail("empty resource id".into()));
        }
        let count = self.content.chars().count();
        if count != self.length {
            return Err(fail(format!(
                "length {} does not match content character count {count}",
                self.length
            )));
        }
        if !self.content.is_empty() && self.keywords.is_empty() {
            return Err(fail("keywords must be nonempty for nonempty content".into()));
        }
        if let Some(e) = &self.embedding {
            if e.0.iter().any(|v| !v.is_finite()) {
                return Err(fail("embedding has non-finite entries".into()));
            }
        }
        Ok(())
    }
}

/// Fields of a resource that `update_resource` may replace.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResourceField {
    Content,
    Summary,
    Keywords,
}

impl FromStr for ResourceField {
    type Err = StoreError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "content" => Ok(ResourceField::Content),
            "summary" => Ok(ResourceField::Summary),
            "keywords" | "tags" => Ok(ResourceField::Keywords),
            "resource_id" | "id" | "length" | "source" | "embedding" => {
                Err(StoreError::ImmutableField(s.trim().to_string()))
            }
            other => Err(StoreError::UnknownField(other.to_string())),
        }
    }
}

/// Lowercase alphanumeric tokens of `text`, in order of appearance.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

/// Keyword set of a resource: deduplicated lowercase alphanumeric tokens of
/// length >= 3 drawn from content and summary.
///
/// Content made only of short tokens falls back to all tokens, and content
/// without any alphanumeric character falls back to its trimmed lowercase
/// text, so nonempty content always yields at least one keyword.
pub fn extract_keywords(content: &str, summary: &str) -> BTreeSet<String> {
    let tokens: Vec<String> = tokenize(content)
        .into_iter()
        .chain(tokenize(summary))
        .collect();
    let long: BTreeSet<String> = tokens
        .iter()
        .filter(|t| t.chars().count() >= 3)
        .cloned()
        .collect();
    if !long.is_empty() {
        return long;
    }
    if !tokens.is_empty() {
        return tokens.into_iter().collect();
    }
    let raw = content.trim().to_lowercase();
    let raw = if raw.is_empty() { content.to_lowercase() } else { raw };
    if raw.is_empty() {
        BTreeSet::new()
    } else {
        BTreeSet::from([raw.chars().take(32).collect()])
    }
}
