use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::backend::ChatBackend;
use super::prompts::{render_executor_prompt, PromptMode};
use super::runner::{run_agent, AgentConfig, Trajectory};
use crate::retrieval::{embedding_search, keyword_search};
use crate::store::{ContextSnapshot, DetailLevel, Repository, Workspace, MAIN_BRANCH};
use crate::tools::{executor_registry, SearchSetup, ToolRegistry};

/// Which resources make it into the executor's context preview.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "select")]
pub enum PreviewSelection {
    All,
    /// Top-k by embedding similarity to the task text.
    Embedding { k: usize },
    /// Top-k by keyword overlap with the task text.
    Keyword { k: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreviewStrategy {
    #[serde(flatten)]
    pub selection: PreviewSelection,
    pub detail: DetailLevel,
}

impl Default for PreviewStrategy {
    fn default() -> Self {
        Self {
            selection: PreviewSelection::Embedding { k: 8 },
            detail: DetailLevel::Preview,
        }
    }
}

impl PreviewStrategy {
    pub fn full() -> Self {
        Self {
            selection: PreviewSelection::All,
            detail: DetailLevel::Detail,
        }
    }

    /// Renders the preview of `repo` for `task`. Selection falls back to
    /// position order if retrieval fails.
    pub fn render(&self, repo: &mut Repository, search: &SearchSetup, task: &str) -> String {
        let ids: Option<Vec<String>> = match self.selection {
            PreviewSelection::All => None,
            PreviewSelection::Embedding { k } => embedding_search(repo, search.embedder.as_ref(), task, k)
                .map(|h| h.into_iter().map(|h| h.resource_id.to_string()).collect())
                .map_err(|e| log::warn!("preview selection failed: {e}"))
                .ok(),
            PreviewSelection::Keyword { k } => keyword_search(repo, task, k)
                .map(|h| h.into_iter().map(|h| h.resource_id.to_string()).collect())
                .map_err(|e| log::warn!("preview selection failed: {e}"))
                .ok(),
        };
        let entries = match ids {
            None => repo.list_resources(self.detail, None),
            Some(ids) => ids
                .iter()
                .filter_map(|id| repo.get_resource(id).ok())
                .map(|r| repo.listing_entry(r, self.detail))
                .collect(),
        };
        let sep = if self.detail == DetailLevel::Summary { "\n" } else { "\n\n" };
        entries.iter().map(|e| e.render()).collect::<Vec<_>>().join(sep)
    }
}

/// The task-solving agent bound to a backend and its read-only tools.
pub struct ExecutorAgent {
    backend: Arc<dyn ChatBackend>,
    config: AgentConfig,
    search: SearchSetup,
    preview: PreviewStrategy,
    registry: ToolRegistry,
}

impl ExecutorAgent {
    pub fn new(
        backend: Arc<dyn ChatBackend>,
        config: AgentConfig,
        search: SearchSetup,
        preview: PreviewStrategy,
        payload_cap: usize,
    ) -> Self {
        let registry = executor_registry(search.clone(), payload_cap);
        Self {
            backend,
            config,
            search,
            preview,
            registry,
        }
    }

    pub fn preview_strategy(&self) -> PreviewStrategy {
        self.preview
    }

    /// Solves `task` against a committed context state.
    pub fn run(&self, snapshot: &ContextSnapshot, task: &str, mode: PromptMode) -> Trajectory {
        let mut repo = Repository::new();
        repo.import_snapshot(snapshot.clone(), MAIN_BRANCH, "executor view")
            .expect("main branch exists");
        let preview = self.preview.render(&mut repo, &self.search, task);
        let prompt = render_executor_prompt(&preview, task, &self.registry.specs(), mode)
            .expect("executor template placeholders are fixed");
        let mut workspace = Workspace::with_repository(repo);
        run_agent(
            &self.config,
            &prompt,
            &self.registry,
            &mut workspace,
            mode,
            self.backend.as_ref(),
        )
    }
}
