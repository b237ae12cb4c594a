use std::fmt::Write as _;
use std::str::FromStr;

use serde_json::{Map, Value};

use super::{arg_str, arg_usize, ParamKind, ParamSpec, SearchSetup, Tool, ToolEnv, ToolResult, ToolSpec};
use crate::retrieval::{agent_search, embedding_search, keyword_search, SearchHit};
use crate::store::{DetailLevel, Repository, ResourceField, Source, MAIN_BRANCH};

pub const CONTEXT_TOOL: &str = "context_manage_tool";

/// The optimizer rule quoted when a version-control action is refused.
pub const EDITION_ONLY_RULE: &str = "[Edition Only] You MUST ONLY modify the content. DO NOT use any branch management actions like create_branch, checkout, merge_branch, or commit. Changes will be committed automatically when you are done.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    Create,
    Add,
    Update,
    Remove,
    Swap,
    Merge,
    SetActive,
    GetResource,
    Delete,
    Search,
    EmbeddingSearch,
    LlmSearch,
    ListResources,
    CreateBranch,
    Checkout,
    Commit,
    MergeBranch,
    ListBranches,
    UpdateBranchInfo,
}

impl Action {
    pub const ALL: [Action; 19] = [
        Action::Create,
        Action::Add,
        Action::Update,
        Action::Remove,
        Action::Swap,
        Action::Merge,
        Action::SetActive,
        Action::GetResource,
        Action::Delete,
        Action::Search,
        Action::EmbeddingSearch,
        Action::LlmSearch,
        Action::ListResources,
        Action::CreateBranch,
        Action::Checkout,
        Action::Commit,
        Action::MergeBranch,
        Action::ListBranches,
        Action::UpdateBranchInfo,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Action::Create => "create",
            Action::Add => "add",
            Action::Update => "update",
            Action::Remove => "remove",
            Action::Swap => "swap",
            Action::Merge => "merge",
            Action::SetActive => "set_active",
            Action::GetResource => "get_resource",
            Action::Delete => "delete",
            Action::Search => "search",
            Action::EmbeddingSearch => "embedding_search",
            Action::LlmSearch => "llm_search",
            Action::ListResources => "list_resources",
            Action::CreateBranch => "create_branch",
            Action::Checkout => "checkout",
            Action::Commit => "commit",
            Action::MergeBranch => "merge_branch",
            Action::ListBranches => "list_branches",
            Action::UpdateBranchInfo => "update_branch_info",
        }
    }

    pub fn is_version_control(self) -> bool {
        matches!(
            self,
            Action::CreateBranch
                | Action::Checkout
                | Action::Commit
                | Action::MergeBranch
                | Action::ListBranches
                | Action::UpdateBranchInfo
        )
    }

    pub fn is_read(self) -> bool {
        matches!(
            self,
            Action::GetResource
                | Action::Search
                | Action::EmbeddingSearch
                | Action::LlmSearch
                | Action::ListResources
        )
    }
}

impl FromStr for Action {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        Action::ALL
            .iter()
            .copied()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| format!("unknown action '{s}'"))
    }
}

/// Which actions a session may use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ToolMode {
    /// Read actions only.
    Executor,
    /// Everything except version control.
    Optimizer,
    /// Every action; for operators and tests.
    Full,
}

impl ToolMode {
    pub fn allows(self, action: Action) -> bool {
        match self {
            ToolMode::Executor => action.is_read(),
            ToolMode::Optimizer => !action.is_version_control(),
            ToolMode::Full => true,
        }
    }
}

/// One dispatcher over every context action, routed to the store and
/// retrieval layers of the workspace's active context.
pub struct ContextManageTool {
    mode: ToolMode,
    search: SearchSetup,
}

impl ContextManageTool {
    pub fn new(mode: ToolMode, search: SearchSetup) -> Self {
        Self { mode, search }
    }

    pub fn mode(&self) -> ToolMode {
        self.mode
    }

    fn refusal(&self, action: Action) -> ToolResult {
        match self.mode {
            ToolMode::Optimizer => ToolResult::error(format!(
                "action '{}' refused. Rule (5) {EDITION_ONLY_RULE}",
                action.as_str()
            )),
            _ => ToolResult::error(format!(
                "action '{}' is not available here: the context is read-only for this agent (allowed: {})",
                action.as_str(),
                self.allowed().join(", ")
            )),
        }
    }

    fn allowed(&self) -> Vec<&'static str> {
        Action::ALL
            .iter()
            .filter(|a| self.mode.allows(**a))
            .map(|a| a.as_str())
            .collect()
    }

    fn run(&self, action: Action, args: &Map<String, Value>, env: &mut ToolEnv<'_>) -> Result<String, String> {
        let need = |key: &str| required(args, action, key);
        let k = arg_usize(args, "k").unwrap_or(5);
        match action {
            Action::Create => {
                let id = env.workspace.create_context();
                Ok(format!("created empty context {id}; it is now active"))
            }
            Action::SetActive => {
                let id = need("context_id")?;
                env.workspace.set_active(id).map_err(|e| e.to_string())?;
                Ok(format!("active context is now {id}"))
            }
            _ => {
                let repo = env.workspace.active_mut().map_err(|e| e.to_string())?;
                self.run_on_repo(action, args, repo, k)
            }
        }
    }

    fn run_on_repo(
        &self,
        action: Action,
        args: &Map<String, Value>,
        repo: &mut Repository,
        k: usize,
    ) -> Result<String, String> {
        let need = |key: &str| required(args, action, key);
        let e = |err: crate::store::StoreError| err.to_string();
        match action {
            Action::Add => {
                let content = need("content")?;
                let summary = arg_str(args, "summary").unwrap_or_default();
                let source = match arg_str(args, "source") {
                    Some(s) => s.parse::<Source>()?,
                    None => Source::OptimizerAuthored,
                };
                let id = repo.add_resource(content, summary, source).map_err(e)?;
                Ok(format!("added resource {id}"))
            }
            Action::Update => {
                let id = need("resource_id")?;
                let field: ResourceField = need("field")?.parse().map_err(e)?;
                let value = need("value")?;
                repo.update_resource(id, field, value).map_err(e)?;
                Ok(format!("updated resource {id}"))
            }
            Action::Remove | Action::Delete => {
                let id = need("resource_id")?;
                repo.remove_resource(id).map_err(e)?;
                Ok(format!("removed resource {id}"))
            }
            Action::Swap => {
                let a = need("resource_id")?;
                let b = need("other_id")?;
                repo.swap_resources(a, b).map_err(e)?;
                Ok(format!("swapped {a} and {b}"))
            }
            Action::Merge => {
                let a = need("resource_id")?;
                let b = need("other_id")?;
                let summary = arg_str(args, "summary").unwrap_or_default();
                let id = repo.merge_resources(a, b, summary).map_err(e)?;
                Ok(format!("merged {a} and {b} into {id}"))
            }
            Action::GetResource => {
                let r = repo.get_resource(need("resource_id")?).map_err(e)?;
                let keywords: Vec<&str> = r.keywords.iter().map(String::as_str).collect();
                Ok(format!(
                    "[{}] {}\nsource: {} | length: {} | keywords: {}\n---\n{}",
                    r.id,
                    r.summary,
                    r.source,
                    r.length,
                    keywords.join(", "),
                    r.content
                ))
            }
            Action::Search => {
                let hits = keyword_search(repo, need("query")?, k).map_err(|x| x.to_string())?;
                Ok(render_hits(repo, &hits))
            }
            Action::EmbeddingSearch => {
                let hits = embedding_search(repo, self.search.embedder.as_ref(), need("query")?, k)
                    .map_err(|x| x.to_string())?;
                Ok(render_hits(repo, &hits))
            }
            Action::LlmSearch => {
                let agent = self
                    .search
                    .search_agent
                    .as_ref()
                    .ok_or("llm_search is not configured for this session")?;
                let out = agent_search(repo, agent.as_ref(), need("query")?, k)
                    .map_err(|x| x.to_string())?;
                let mut text = render_hits(repo, &out.hits);
                for w in out.warnings {
                    let _ = write!(text, "\nwarning: {w}");
                }
                Ok(text)
            }
            Action::ListResources => {
                let detail = match arg_str(args, "detail") {
                    Some(d) => d.parse::<DetailLevel>()?,
                    None => DetailLevel::Summary,
                };
                let entries = repo.list_resources(detail, arg_usize(args, "limit"));
                if entries.is_empty() {
                    return Ok("the context is empty".into());
                }
                let sep = if detail == DetailLevel::Summary { "\n" } else { "\n\n" };
                Ok(entries.iter().map(|x| x.render()).collect::<Vec<_>>().join(sep))
            }
            Action::CreateBranch => {
                let name = need("name")?;
                repo.create_branch(name, arg_str(args, "description").unwrap_or_default())
                    .map_err(e)?;
                Ok(format!("created branch {name}"))
            }
            Action::Checkout => {
                let target = need("target")?;
                repo.checkout(target).map_err(e)?;
                Ok(format!("checked out {target}"))
            }
            Action::Commit => {
                let id = repo
                    .commit(arg_str(args, "message").unwrap_or_default())
                    .map_err(e)?;
                Ok(format!("committed {id}"))
            }
            Action::MergeBranch => {
                let source = need("source_branch")?;
                let target = arg_str(args, "target_branch").unwrap_or(MAIN_BRANCH);
                let id = repo.merge_branch(source, target).map_err(e)?;
                Ok(format!("merged {source} into {target} as {id}"))
            }
            Action::ListBranches => Ok(repo
                .list_branches()
                .iter()
                .map(|b| {
                    let meta: Vec<String> =
                        b.metadata.iter().map(|(k, v)| format!("{k}={v}")).collect();
                    format!("{} @ {} {} {}", b.name, b.head.short(), b.description, meta.join(" "))
                        .trim_end()
                        .to_string()
                })
                .collect::<Vec<_>>()
                .join("\n")),
            Action::UpdateBranchInfo => {
                let name = need("name")?;
                repo.update_branch_info(name, need("key")?, need("value")?)
                    .map_err(e)?;
                Ok(format!("updated branch {name}"))
            }
            Action::Create | Action::SetActive => unreachable!("handled by caller"),
        }
    }
}

fn required<'a>(args: &'a Map<String, Value>, action: Action, key: &str) -> Result<&'a str, String> {
    arg_str(args, key)
        .ok_or_else(|| format!("action '{}' requires parameter '{key}'", action.as_str()))
}

fn render_hits(repo: &Repository, hits: &[SearchHit]) -> String {
    if hits.is_empty() {
        return "no matching resources".into();
    }
    hits.iter()
        .map(|h| {
            let summary = repo
                .get_resource(h.resource_id.as_str())
                .map(|r| r.summary.as_str())
                .unwrap_or_default();
            format!("{} (score {:.4}): {}", h.resource_id, h.score, summary)
        })
        .collect::<Vec<_>>()
        .join("\n")
}

impl Tool for ContextManageTool {
    fn spec(&self) -> ToolSpec {
        use ParamKind::*;
        let opt = ParamSpec::optional;
        ToolSpec {
            name: CONTEXT_TOOL.into(),
            description: format!(
                "Manage and read the structured context. Allowed actions: {}.",
                self.allowed().join(", ")
            ),
            params: vec![
                ParamSpec::required("action", String, "the action to perform"),
                opt("resource_id", String, "target resource id"),
                opt("other_id", String, "second resource id for swap or merge"),
                opt("content", String, "resource content for add"),
                opt("summary", String, "resource summary for add or merge"),
                opt("source", String, "provenance for add: optimizer-authored, wikipedia, web or imported"),
                opt("field", String, "field to update: content, summary or keywords"),
                opt("value", String, "new value for update or update_branch_info"),
                opt("query", String, "query for search, embedding_search or llm_search"),
                opt("k", Integer, "number of search results (default 5)"),
                opt("detail", String, "list_resources detail: summary, preview or detail"),
                opt("limit", Integer, "maximum number of listed resources"),
                opt("context_id", String, "context id for set_active"),
                opt("name", String, "branch name"),
                opt("description", String, "branch description"),
                opt("target", String, "branch or commit to check out"),
                opt("message", String, "commit message"),
                opt("source_branch", String, "branch to merge from"),
                opt("target_branch", String, "branch to merge into"),
                opt("key", String, "branch metadata key"),
            ],
            output_type: "string".into(),
        }
    }

    fn invoke(&self, args: &Map<String, Value>, env: &mut ToolEnv<'_>) -> ToolResult {
        let action = match arg_str(args, "action").map(Action::from_str) {
            Some(Ok(a)) => a,
            Some(Err(e)) => {
                return ToolResult::error(format!("{e}; allowed actions: {}", self.allowed().join(", ")))
            }
            None => return ToolResult::error("missing required parameter 'action'"),
        };
        if !self.mode.allows(action) {
            return self.refusal(action);
        }
        match self.run(action, args, env) {
            Ok(text) => ToolResult::ok(text),
            Err(e) => ToolResult::error(e),
        }
    }
}
