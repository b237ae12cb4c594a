//! Search over the resources of a context: keyword overlap, embedding
//! similarity and delegation to a ranking sub-agent.

mod embed;

pub use self::embed::{cosine, EmbeddingProvider, HashingEmbedder, ProviderError};

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{parse_action_blob, BackendError, ChatBackend, Message, Template};
use crate::store::{extract_keywords, DetailLevel, Repository, ResourceId, StoreError};

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("empty query")]
    EmptyQuery,
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("search agent failed: {0}")]
    Backend(#[from] BackendError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchKind {
    Keyword,
    Embedding,
    Agent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub resource_id: ResourceId,
    pub score: f64,
    pub match_kind: MatchKind,
}

/// Jaccard similarity of two token sets; 0 when both are empty.
pub fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

/// Sorts by descending score, keeping the input (position) order on ties.
fn rank(mut hits: Vec<SearchHit>, k: usize) -> Vec<SearchHit> {
    hits.sort_by(|a, b| b.score.total_cmp(&a.score));
    hits.truncate(k);
    hits
}

/// Top-`k` resources by Jaccard overlap between the query's keyword set and
/// each resource's keywords. Resources without overlap are left out.
pub fn keyword_search(
    repo: &Repository,
    query: &str,
    k: usize,
) -> Result<Vec<SearchHit>, RetrievalError> {
    if query.trim().is_empty() {
        return Err(RetrievalError::EmptyQuery);
    }
    let q = extract_keywords(query, "");
    let hits = repo
        .resources()
        .iter()
        .filter_map(|r| {
            let score = jaccard(&q, &r.keywords);
            (score > 0.0).then(|| SearchHit {
                resource_id: r.id.clone(),
                score,
                match_kind: MatchKind::Keyword,
            })
        })
        .collect();
    Ok(rank(hits, k))
}

/// Top-`k` resources by cosine similarity mapped to `[0, 1]` as
/// `(1 + cos) / 2`. Missing embeddings are computed first.
pub fn embedding_search(
    repo: &mut Repository,
    provider: &dyn EmbeddingProvider,
    query: &str,
    k: usize,
) -> Result<Vec<SearchHit>, RetrievalError> {
    if query.trim().is_empty() {
        return Err(RetrievalError::EmptyQuery);
    }
    if repo.resources().is_empty() {
        return Ok(Vec::new());
    }
    flush(repo, provider)?;
    let q = provider.embed(query)?;
    let hits = repo
        .resources()
        .iter()
        .map(|r| {
            let e = r.embedding.as_ref().expect("flushed above");
            SearchHit {
                resource_id: r.id.clone(),
                score: (1.0 + cosine(&q, e.values())) / 2.0,
                match_kind: MatchKind::Embedding,
            }
        })
        .collect();
    Ok(rank(hits, k))
}

/// Embeds every resource whose embedding is missing or stale.
pub fn flush(repo: &mut Repository, provider: &dyn EmbeddingProvider) -> Result<usize, RetrievalError> {
    use crate::store::FlushError;
    repo.flush_embeddings(&provider.info(), |text| provider.embed(text))
        .map_err(|e| match e {
            FlushError::Store(s) => RetrievalError::Store(s),
            FlushError::Provider(p) => RetrievalError::Provider(p),
        })
}

pub const SEARCH_AGENT_TEMPLATE: &str = include_str!("../../templates/llm_search.md");

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AgentSearch {
    pub hits: Vec<SearchHit>,
    pub warnings: Vec<String>,
}

/// Asks a sub-agent to rank the context for `query`. Unknown ids are
/// dropped and repeated ids keep their first position.
pub fn agent_search(
    repo: &Repository,
    backend: &dyn ChatBackend,
    query: &str,
    k: usize,
) -> Result<AgentSearch, RetrievalError> {
    if query.trim().is_empty() {
        return Err(RetrievalError::EmptyQuery);
    }
    let listing = repo
        .list_resources(DetailLevel::Summary, None)
        .iter()
        .map(|e| e.render())
        .collect::<Vec<_>>()
        .join("\n");
    let prompt = Template::new("llm_search", SEARCH_AGENT_TEMPLATE)
        .render(&[
            ("query", query),
            ("listing", &listing),
            ("k", &k.to_string()),
        ])
        .expect("search template placeholders are fixed");
    let reply = backend.complete(&[Message::system(prompt), Message::user(query)])?;
    let text = match parse_action_blob(&reply) {
        Some(call) => match call.arguments.get("answer") {
            Some(serde_json::Value::String(s)) => s.clone(),
            Some(other) => other.to_string(),
            None => reply.clone(),
        },
        None => reply.clone(),
    };
    let ids = parse_ranking(&text, repo);
    let mut out = AgentSearch::default();
    if ids.is_empty() {
        out.warnings
            .push("search agent returned no parseable ranking".to_string());
        return Ok(out);
    }
    out.hits = ids
        .into_iter()
        .take(k)
        .enumerate()
        .map(|(rank, id)| SearchHit {
            resource_id: id,
            score: 1.0 / (rank as f64 + 1.0),
            match_kind: MatchKind::Agent,
        })
        .collect();
    Ok(out)
}

/// Known resource ids in order of first mention.
fn parse_ranking(text: &str, repo: &Repository) -> Vec<ResourceId> {
    let known: HashSet<&str> = repo.resources().iter().map(|r| r.id.as_str()).collect();
    let mut seen = HashSet::new();
    text.split(|c: char| !(c.is_alphanumeric() || c == '-' || c == '_'))
        .filter(|t| known.contains(t) && seen.insert(t.to_string()))
        .map(ResourceId::from)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::SequenceBackend;
    use crate::store::Source;

    fn repo(contents: &[&str]) -> Repository {
        let mut repo = Repository::new();
        for c in contents {
            repo.add_resource(c, "", Source::OptimizerAuthored).unwrap();
        }
        repo
    }

    #[test]
    fn keyword_search_single_match_and_no_overlap() {
        let repo = repo(&["apples grow", "bananas ripen"]);
        let hits = keyword_search(&repo, "bananas", 5).unwrap();
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].resource_id.as_str(), "r2");
        assert!(hits[0].score > 0.0);
        assert!(keyword_search(&repo, "cherries", 5).unwrap().is_empty());
        assert!(matches!(
            keyword_search(&repo, "  ", 5),
            Err(RetrievalError::EmptyQuery)
        ));
    }

    #[test]
    fn keyword_ties_go_to_earlier_resource() {
        let repo = repo(&["zebra one", "zebra two"]);
        let hits = keyword_search(&repo, "zebra", 5).unwrap();
        assert_eq!(hits[0].score, hits[1].score);
        assert_eq!(hits[0].resource_id.as_str(), "r1");
    }

    #[test]
    fn embedding_search_finds_exact_content() {
        let mut repo = repo(&["red fox jumps", "blue whale sings", "green frog leaps"]);
        let emb = HashingEmbedder::default();
        let hits = embedding_search(&mut repo, &emb, "blue whale sings", 10).unwrap();
        assert_eq!(hits.len(), 3);
        assert_eq!(hits[0].resource_id.as_str(), "r2");
        assert!((hits[0].score - 1.0).abs() < 1e-9);
        let mut empty = Repository::new();
        assert!(embedding_search(&mut empty, &emb, "x", 3).unwrap().is_empty());
    }

    #[test]
    fn agent_search_filters_and_dedupes() {
        let repo = repo(&["a", "b", "c"]);
        let backend = SequenceBackend::new(vec![
            "Action:\n{\"name\": \"final_answer_tool\", \"arguments\": {\"answer\": \"r3, r9, r1, r3\"}}"
                .to_string(),
        ]);
        let out = agent_search(&repo, &backend, "anything", 5).unwrap();
        let ids: Vec<_> = out.hits.iter().map(|h| h.resource_id.as_str()).collect();
        assert_eq!(ids, vec!["r3", "r1"]);
        assert!(out.warnings.is_empty());

        let garbage = SequenceBackend::new(vec!["I cannot rank these.".to_string()]);
        let out = agent_search(&repo, &garbage, "anything", 5).unwrap();
        assert!(out.hits.is_empty());
        assert_eq!(out.warnings.len(), 1);
    }
}
