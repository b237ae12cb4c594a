//! Agent runtime: chat backends, prompt rendering, the action-blob tool
//! protocol, usage-tag parsing and the agent loop.

mod backend;
mod blob;
mod executor;
mod message;
pub mod prompts;
mod runner;
mod usage;

pub use self::backend::{
    AgentScript, BackendError, ChatBackend, HttpBackend, HttpBackendConfig, RecordingBackend,
    ReplayBackend, ReplayRecord, ScriptedBackend, SequenceBackend, API_KEY_ENV,
};
pub use self::blob::{format_action, parse_action_blob, ToolCall};
pub use self::executor::{ExecutorAgent, PreviewSelection, PreviewStrategy};
pub use self::message::{conversation_key, Message, Role};
pub use self::prompts::{
    render_executor_prompt, render_optimizer_prompt, DataPackage, FeedbackEntry, PromptError,
    PromptMode, RenderedPrompt, Template, UpdateRecord,
};
pub use self::runner::{
    run_agent, AgentConfig, ToolInvocation, Trajectory, TrajectoryStatus, DUPLICATE_CALL_MESSAGE,
    MISSING_ACTION_MESSAGE,
};
pub use self::usage::{parse_usage_tags, UsageSummary};
