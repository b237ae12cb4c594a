use std::collections::HashSet;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::backend::ChatBackend;
use super::blob::{parse_action_blob, ToolCall};
use super::message::Message;
use super::prompts::{PromptMode, RenderedPrompt};
use super::usage::UsageSummary;
use crate::store::Workspace;
use crate::tools::{SessionState, ToolEnv, ToolRegistry, ToolResult};

pub const MISSING_ACTION_MESSAGE: &str = "Error: no valid action blob found. You MUST ALWAYS call a tool in your response. Reply with `Action:` followed by {\"name\": ..., \"arguments\": {...}}. To finish, call final_answer_tool.";
pub const DUPLICATE_CALL_MESSAGE: &str =
    "Error: DO NOT call the same tool with the exact same parameters twice.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    /// Upper bound on backend calls, retries included.
    pub max_steps: usize,
    /// Retries of a retryable backend error within one step.
    pub max_retries: usize,
    /// Base delay of the exponential backoff between retries.
    pub backoff_ms: u64,
}

impl AgentConfig {
    pub fn executor() -> Self {
        Self {
            max_steps: 12,
            ..Self::default()
        }
    }

    pub fn optimizer() -> Self {
        Self {
            max_steps: 24,
            ..Self::default()
        }
    }
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            max_steps: 12,
            max_retries: 3,
            backoff_ms: 500,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryStatus {
    Completed,
    /// Step budget ran out before a final answer.
    Truncated,
    /// The backend failed for good.
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolInvocation {
    pub call: ToolCall,
    pub result: ToolResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub messages: Vec<Message>,
    pub tool_calls: Vec<ToolInvocation>,
    pub final_answer: Option<String>,
    pub usage_summary: Option<UsageSummary>,
    pub plans: Vec<String>,
    /// Backend calls made.
    pub step_count: usize,
    /// Rough token count of the conversation (characters / 4).
    pub token_estimate: usize,
    pub status: TrajectoryStatus,
    pub error: Option<String>,
}

impl Trajectory {
    /// The answer, or an empty string when the run did not complete.
    pub fn output(&self) -> &str {
        self.final_answer.as_deref().unwrap_or_default()
    }

    pub fn is_completed(&self) -> bool {
        self.status == TrajectoryStatus::Completed
    }
}

enum StepOutcome {
    Reply(String),
    Exhausted,
    Failed(String),
}

fn call_backend(
    backend: &dyn ChatBackend,
    messages: &[Message],
    config: &AgentConfig,
    calls: &mut usize,
) -> StepOutcome {
    let mut retries = 0;
    loop {
        if *calls >= config.max_steps {
            return if retries == 0 {
                StepOutcome::Exhausted
            } else {
                StepOutcome::Failed("step budget exhausted while retrying the backend".into())
            };
        }
        *calls += 1;
        match backend.complete(messages) {
            Ok(text) => return StepOutcome::Reply(text),
            Err(e) if e.is_retryable() && retries < config.max_retries => {
                let delay = config.backoff_ms.saturating_mul(1 << retries.min(16));
                log::warn!("backend error ({e}); retry {} in {delay} ms", retries + 1);
                if delay > 0 {
                    thread::sleep(Duration::from_millis(delay));
                }
                retries += 1;
            }
            Err(e) => return StepOutcome::Failed(e.to_string()),
        }
    }
}

/// Runs the action-blob loop until `final_answer_tool` succeeds, the step
/// budget runs out, or the backend fails.
pub fn run_agent(
    config: &AgentConfig,
    prompt: &RenderedPrompt,
    registry: &ToolRegistry,
    workspace: &mut Workspace,
    mode: PromptMode,
    backend: &dyn ChatBackend,
) -> Trajectory {
    let mut messages = vec![
        Message::system(prompt.system.clone()),
        Message::user(prompt.user.clone()),
    ];
    let mut session = SessionState::new(mode);
    let mut tool_calls = Vec::new();
    let mut seen = HashSet::new();
    let mut calls = 0;
    let mut error = None;

    let status = loop {
        let reply = match call_backend(backend, &messages, config, &mut calls) {
            StepOutcome::Reply(r) => r,
            StepOutcome::Exhausted => break TrajectoryStatus::Truncated,
            StepOutcome::Failed(e) => {
                error = Some(e);
                break TrajectoryStatus::Failed;
            }
        };
        messages.push(Message::assistant(reply.clone()));
        let Some(call) = parse_action_blob(&reply) else {
            messages.push(Message::tool(MISSING_ACTION_MESSAGE));
            continue;
        };
        let result = if seen.insert(call.signature()) {
            let mut env = ToolEnv {
                workspace: &mut *workspace,
                session: &mut session,
            };
            registry.dispatch(&call, &mut env)
        } else {
            ToolResult::error(DUPLICATE_CALL_MESSAGE.trim_start_matches("Error: "))
        };
        messages.push(Message::tool(result.observation()));
        tool_calls.push(ToolInvocation { call, result });
        if session.final_answer.is_some() {
            break TrajectoryStatus::Completed;
        }
    };

    let token_estimate = messages.iter().map(|m| m.content.chars().count()).sum::<usize>() / 4;
    Trajectory {
        messages,
        tool_calls,
        final_answer: session.final_answer,
        usage_summary: session.usage_summary,
        plans: session.plans,
        step_count: calls,
        token_estimate,
        status,
        error,
    }
}
