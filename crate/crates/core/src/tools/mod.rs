//! Tools exposed to agents and the registry that validates and dispatches
//! their calls.

mod context;
mod info;
mod session;

pub use self::context::{Action, ContextManageTool, ToolMode, CONTEXT_TOOL, EDITION_ONLY_RULE};
pub use self::info::{
    BrowserAdapter, BrowserFixture, BrowserTool, FixtureBrowser, FixtureWikipedia, InfoFixtures,
    LiveBrowser, LiveWikipedia, WikiPage, WikipediaAdapter, WikipediaFixture, WikipediaSearchTool,
    BROWSER_TOOL, WIKIPEDIA_TOOL,
};
pub use self::session::{
    CtxUsageSummaryTool, FinalAnswerTool, PlanningTool, FINAL_ANSWER_TOOL, PLANNING_TOOL,
    USAGE_SUMMARY_TOOL,
};

use std::fmt;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::agents::{ChatBackend, PromptMode, ToolCall, UsageSummary};
use crate::retrieval::EmbeddingProvider;
use crate::store::{Workspace, TRUNCATION_MARKER};

pub const DEFAULT_PAYLOAD_CAP: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamKind {
    String,
    Integer,
    Number,
    Boolean,
    Object,
    Array,
}

impl ParamKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ParamKind::String => "string",
            ParamKind::Integer => "integer",
            ParamKind::Number => "number",
            ParamKind::Boolean => "boolean",
            ParamKind::Object => "object",
            ParamKind::Array => "array",
        }
    }

    /// Checks `v` against the kind, returning a normalized value. Scalars
    /// are accepted as strings and numeric strings as numbers, since models
    /// often quote numbers.
    fn coerce(self, v: &Value) -> Option<Value> {
        match (self, v) {
            (ParamKind::String, Value::String(_)) => Some(v.clone()),
            (ParamKind::String, Value::Number(n)) => Some(Value::String(n.to_string())),
            (ParamKind::String, Value::Bool(b)) => Some(Value::String(b.to_string())),
            (ParamKind::Integer, Value::Number(n)) => {
                if n.is_i64() || n.is_u64() {
                    Some(v.clone())
                } else {
                    n.as_f64()
                        .filter(|f| f.fract() == 0.0 && f.is_finite())
                        .map(|f| Value::from(f as i64))
                }
            }
            (ParamKind::Integer, Value::String(s)) => s.trim().parse::<i64>().ok().map(Value::from),
            (ParamKind::Number, Value::Number(_)) => Some(v.clone()),
            (ParamKind::Number, Value::String(s)) => s.trim().parse::<f64>().ok().map(Value::from),
            (ParamKind::Boolean, Value::Bool(_)) => Some(v.clone()),
            (ParamKind::Boolean, Value::String(s)) => match s.trim() {
                "true" => Some(Value::Bool(true)),
                "false" => Some(Value::Bool(false)),
                _ => None,
            },
            (ParamKind::Object, Value::Object(_)) => Some(v.clone()),
            (ParamKind::Array, Value::Array(_)) => Some(v.clone()),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub kind: ParamKind,
    pub required: bool,
    pub description: String,
}

impl ParamSpec {
    pub fn required(name: &str, kind: ParamKind, description: &str) -> Self {
        Self {
            name: name.into(),
            kind,
            required: true,
            description: description.into(),
        }
    }

    pub fn optional(name: &str, kind: ParamKind, description: &str) -> Self {
        Self {
            required: false,
            ..Self::required(name, kind, description)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolSpec {
    pub name: String,
    pub description: String,
    pub params: Vec<ParamSpec>,
    pub output_type: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolResult {
    pub ok: bool,
    pub payload: Option<String>,
    pub error: Option<String>,
    #[serde(default)]
    pub truncated: bool,
}

impl ToolResult {
    pub fn ok(payload: impl Into<String>) -> Self {
        Self {
            ok: true,
            payload: Some(payload.into()),
            error: None,
            truncated: false,
        }
    }

    pub fn error(error: impl Into<String>) -> Self {
        Self {
            ok: false,
            payload: None,
            error: Some(error.into()),
            truncated: false,
        }
    }

    /// Payload when ok, error text otherwise.
    pub fn text(&self) -> &str {
        self.payload
            .as_deref()
            .or(self.error.as_deref())
            .unwrap_or_default()
    }

    /// The tool message fed back to the agent.
    pub fn observation(&self) -> String {
        if self.ok {
            format!("Observation:\n{}", self.text())
        } else {
            format!("Error: {}", self.text())
        }
    }

    fn capped(mut self, cap: usize) -> Self {
        let slot = if self.ok { &mut self.payload } else { &mut self.error };
        if let Some(text) = slot.as_mut() {
            if let Some(cut) = cap_text(text, cap) {
                *text = cut;
                self.truncated = true;
            }
        }
        self
    }
}

/// Cuts `text` to at most `cap` characters, marker included. `None` when it
/// already fits.
pub fn cap_text(text: &str, cap: usize) -> Option<String> {
    if text.chars().count() <= cap {
        return None;
    }
    let marker_len = TRUNCATION_MARKER.chars().count();
    if cap <= marker_len {
        return Some(text.chars().take(cap).collect());
    }
    let mut out: String = text.chars().take(cap - marker_len).collect();
    out.push_str(TRUNCATION_MARKER);
    Some(out)
}

/// Per-run state tools may read and write.
#[derive(Debug, Clone)]
pub struct SessionState {
    pub prompt_mode: PromptMode,
    pub final_answer: Option<String>,
    pub usage_summary: Option<UsageSummary>,
    pub plans: Vec<String>,
}

impl SessionState {
    pub fn new(prompt_mode: PromptMode) -> Self {
        Self {
            prompt_mode,
            final_answer: None,
            usage_summary: None,
            plans: Vec::new(),
        }
    }
}

pub struct ToolEnv<'a> {
    pub workspace: &'a mut Workspace,
    pub session: &'a mut SessionState,
}

pub trait Tool: Send + Sync {
    fn spec(&self) -> ToolSpec;
    /// Arguments have already been validated against `spec()`.
    fn invoke(&self, args: &Map<String, Value>, env: &mut ToolEnv<'_>) -> ToolResult;
}

/// Immutable set of named tools.
pub struct ToolRegistry {
    tools: IndexMap<String, Arc<dyn Tool>>,
    payload_cap: usize,
}

impl fmt::Debug for ToolRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ToolRegistry")
            .field("tools", &self.names())
            .field("payload_cap", &self.payload_cap)
            .finish()
    }
}

impl ToolRegistry {
    /// Fails on duplicate tool names.
    pub fn new(tools: Vec<Arc<dyn Tool>>, payload_cap: usize) -> Result<Self, String> {
        let mut map = IndexMap::new();
        for t in tools {
            let name = t.spec().name;
            if map.insert(name.clone(), t).is_some() {
                return Err(format!("duplicate tool name '{name}'"));
            }
        }
        Ok(Self {
            tools: map,
            payload_cap,
        })
    }

    pub fn names(&self) -> Vec<&str> {
        self.tools.keys().map(String::as_str).collect()
    }

    pub fn specs(&self) -> Vec<ToolSpec> {
        self.tools.values().map(|t| t.spec()).collect()
    }

    pub fn payload_cap(&self) -> usize {
        self.payload_cap
    }

    fn validate(spec: &ToolSpec, args: &Map<String, Value>) -> Result<Map<String, Value>, String> {
        let mut out = Map::new();
        for key in args.keys() {
            if !spec.params.iter().any(|p| &p.name == key) {
                return Err(format!(
                    "unknown parameter '{key}' for {} (expected one of: {})",
                    spec.name,
                    spec.params
                        .iter()
                        .map(|p| p.name.as_str())
                        .collect::<Vec<_>>()
                        .join(", ")
                ));
            }
        }
        for p in &spec.params {
            match args.get(&p.name) {
                None | Some(Value::Null) if p.required => {
                    return Err(format!(
                        "missing required parameter '{}' for {}",
                        p.name, spec.name
                    ))
                }
                None | Some(Value::Null) => {}
                Some(v) => {
                    let coerced = p.kind.coerce(v).ok_or_else(|| {
                        format!(
                            "parameter '{}' of {} must be of type {}",
                            p.name,
                            spec.name,
                            p.kind.as_str()
                        )
                    })?;
                    out.insert(p.name.clone(), coerced);
                }
            }
        }
        Ok(out)
    }

    /// Validates and runs a call. Every failure, including a panicking tool,
    /// comes back as an error result.
    pub fn dispatch(&self, call: &ToolCall, env: &mut ToolEnv<'_>) -> ToolResult {
        let Some(tool) = self.tools.get(&call.name) else {
            return ToolResult::error(format!(
                "unknown tool '{}'; available tools: {}",
                call.name,
                self.names().join(", ")
            ))
            .capped(self.payload_cap);
        };
        let spec = tool.spec();
        let args = match Self::validate(&spec, &call.arguments) {
            Ok(a) => a,
            Err(e) => return ToolResult::error(e).capped(self.payload_cap),
        };
        let result = catch_unwind(AssertUnwindSafe(|| tool.invoke(&args, env)))
            .unwrap_or_else(|_| ToolResult::error(format!("tool '{}' crashed", call.name)));
        result.capped(self.payload_cap)
    }
}

/// Retrieval back ends the context tool needs.
#[derive(Clone)]
pub struct SearchSetup {
    pub embedder: Arc<dyn EmbeddingProvider>,
    /// Sub-agent for `llm_search`; the action errors when absent.
    pub search_agent: Option<Arc<dyn ChatBackend>>,
}

/// Executor tools: read-only context access, usage summary, final answer.
pub fn executor_registry(search: SearchSetup, payload_cap: usize) -> ToolRegistry {
    ToolRegistry::new(
        vec![
            Arc::new(ContextManageTool::new(ToolMode::Executor, search)),
            Arc::new(CtxUsageSummaryTool),
            Arc::new(FinalAnswerTool),
        ],
        payload_cap,
    )
    .expect("distinct tool names")
}

/// Optimizer tools: edit-only context access, planning and final answer,
/// plus information seeking when adapters are given.
pub fn optimizer_registry(
    search: SearchSetup,
    info: Option<(Arc<dyn WikipediaAdapter>, Arc<dyn BrowserAdapter>)>,
    payload_cap: usize,
) -> ToolRegistry {
    let mut tools: Vec<Arc<dyn Tool>> = vec![
        Arc::new(ContextManageTool::new(ToolMode::Optimizer, search)),
        Arc::new(PlanningTool),
    ];
    if let Some((wiki, browser)) = info {
        tools.push(Arc::new(WikipediaSearchTool::new(wiki, payload_cap)));
        tools.push(Arc::new(BrowserTool::new(browser)));
    }
    tools.push(Arc::new(FinalAnswerTool));
    ToolRegistry::new(tools, payload_cap).expect("distinct tool names")
}

pub(crate) fn arg_str<'a>(args: &'a Map<String, Value>, key: &str) -> Option<&'a str> {
    args.get(key).and_then(Value::as_str)
}

pub(crate) fn arg_usize(args: &Map<String, Value>, key: &str) -> Option<usize> {
    args.get(key)
        .and_then(Value::as_i64)
        .map(|v| v.max(0) as usize)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::retrieval::HashingEmbedder;
    use serde_json::json;

    struct Panicky;
    impl Tool for Panicky {
        fn spec(&self) -> ToolSpec {
            ToolSpec {
                name: "panicky".into(),
                description: "always panics".into(),
                params: vec![ParamSpec::optional("n", ParamKind::Integer, "a number")],
                output_type: "string".into(),
            }
        }
        fn invoke(&self, _: &Map<String, Value>, _: &mut ToolEnv<'_>) -> ToolResult {
            panic!("boom")
        }
    }

    struct Echo;
    impl Tool for Echo {
        fn spec(&self) -> ToolSpec {
            ToolSpec {
                name: "echo".into(),
                description: "echoes".into(),
                params: vec![
                    ParamSpec::required("text", ParamKind::String, "text"),
                    ParamSpec::optional("n", ParamKind::Integer, "repeat"),
                ],
                output_type: "string".into(),
            }
        }
        fn invoke(&self, args: &Map<String, Value>, _: &mut ToolEnv<'_>) -> ToolResult {
            let n = arg_usize(args, "n").unwrap_or(1);
            ToolResult::ok(arg_str(args, "text").unwrap().repeat(n))
        }
    }

    fn run(reg: &ToolRegistry, call: ToolCall) -> ToolResult {
        let mut ws = Workspace::new();
        let mut session = SessionState::new(PromptMode::Inference);
        let mut env = ToolEnv {
            workspace: &mut ws,
            session: &mut session,
        };
        reg.dispatch(&call, &mut env)
    }

    fn registry(cap: usize) -> ToolRegistry {
        ToolRegistry::new(vec![Arc::new(Echo), Arc::new(Panicky)], cap).unwrap()
    }

    #[test]
    fn unknown_tool_lists_names() {
        let r = run(&registry(100), ToolCall::with_args("foo", json!({})));
        assert!(!r.ok);
        assert!(r.text().contains("echo, panicky"));
    }

    #[test]
    fn schema_errors_name_the_parameter() {
        let r = run(&registry(100), ToolCall::with_args("echo", json!({})));
        assert!(r.text().contains("'text'"));
        let r = run(&registry(100), ToolCall::with_args("echo", json!({"text": "a", "n": "x"})));
        assert!(r.text().contains("'n'"));
        let r = run(&registry(100), ToolCall::with_args("echo", json!({"text": "a", "zz": 1})));
        assert!(r.text().contains("'zz'"));
        let r = run(&registry(100), ToolCall::with_args("echo", json!({"text": "a", "n": "3"})));
        assert_eq!(r.payload.as_deref(), Some("aaa"));
    }

    #[test]
    fn panics_become_errors() {
        let r = run(&registry(100), ToolCall::with_args("panicky", json!({})));
        assert!(!r.ok);
        assert!(r.text().contains("crashed"));
    }

    #[test]
    fn payload_is_capped_with_marker() {
        let r = run(&registry(50), ToolCall::with_args("echo", json!({"text": "x", "n": 80})));
        assert!(r.truncated);
        let text = r.payload.unwrap();
        assert_eq!(text.chars().count(), 50);
        assert!(text.ends_with(TRUNCATION_MARKER));
        let r = run(&registry(50), ToolCall::with_args("echo", json!({"text": "x", "n": 50})));
        assert!(!r.truncated);
    }

    #[test]
    fn duplicate_names_rejected() {
        assert!(ToolRegistry::new(vec![Arc::new(Echo), Arc::new(Echo)], 10).is_err());
        let search = SearchSetup {
            embedder: Arc::new(HashingEmbedder::default()),
            search_agent: None,
        };
        let reg = executor_registry(search, DEFAULT_PAYLOAD_CAP);
        assert_eq!(
            reg.names(),
            vec!["context_manage_tool", "ctx_usage_summary_tool", "final_answer_tool"]
        );
    }
}
