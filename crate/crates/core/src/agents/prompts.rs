use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tools::ToolSpec;

pub const EXECUTOR_TEMPLATE: &str = include_str!("../../templates/executor.md");
pub const EXECUTOR_SUMMARIZE_STEP: &str = include_str!("../../templates/executor_summarize.md");
pub const OPTIMIZER_SYSTEM_TEMPLATE: &str = include_str!("../../templates/optimizer_system.md");
pub const OPTIMIZER_TASK_TEMPLATE: &str = include_str!("../../templates/optimizer_task.md");

/// Annotation prompts for offline resource analysis. No pipeline consumes
/// them; they are shipped for use with an external grader.
pub mod annotation {
    pub const RELEVANCE: &str = include_str!("../../templates/annotation/relevance.md");
    pub const CONTAMINATION_TRANSLATION: &str =
        include_str!("../../templates/annotation/contamination_translation.md");
    pub const UTILITY_TRANSLATION: &str =
        include_str!("../../templates/annotation/utility_translation.md");
    pub const CONTAMINATION_MEDICAL: &str =
        include_str!("../../templates/annotation/contamination_medical.md");
    pub const UTILITY_MEDICAL: &str = include_str!("../../templates/annotation/utility_medical.md");
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("template '{template}' is missing a value for placeholder '{placeholder}'")]
    MissingPlaceholder {
        template: String,
        placeholder: String,
    },
    #[error("optimizer data package has no executor feedback entries")]
    EmptyBatch,
}

/// A text template with `{{name}}` placeholders.
#[derive(Debug, Clone, Copy)]
pub struct Template<'a> {
    name: &'a str,
    text: &'a str,
}

impl<'a> Template<'a> {
    pub fn new(name: &'a str, text: &'a str) -> Self {
        Self { name, text }
    }

    /// Placeholder names in order of first appearance.
    pub fn placeholders(&self) -> Vec<&'a str> {
        let mut out = Vec::new();
        let mut rest = self.text;
        while let Some(start) = rest.find("{{") {
            let after = &rest[start + 2..];
            let Some(end) = after.find("}}") else { break };
            let name = after[..end].trim();
            if !out.contains(&name) {
                out.push(name);
            }
            rest = &after[end + 2..];
        }
        out
    }

    /// Substitutes every placeholder. Values are inserted verbatim and are
    /// not scanned for further placeholders.
    pub fn render(&self, values: &[(&str, &str)]) -> Result<String, PromptError> {
        let mut out = String::with_capacity(self.text.len());
        let mut rest = self.text;
        while let Some(start) = rest.find("{{") {
            let after = &rest[start + 2..];
            let Some(end) = after.find("}}") else { break };
            let name = after[..end].trim();
            let value = values
                .iter()
                .find(|(k, _)| *k == name)
                .map(|(_, v)| *v)
                .ok_or_else(|| PromptError::MissingPlaceholder {
                    template: self.name.to_string(),
                    placeholder: name.to_string(),
                })?;
            out.push_str(&rest[..start]);
            out.push_str(value);
            rest = &after[end + 2..];
        }
        out.push_str(rest);
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptMode {
    /// Executor also reports context usage via `ctx_usage_summary_tool`.
    Training,
    Inference,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub system: String,
    pub user: String,
}

impl RenderedPrompt {
    pub fn full(&self) -> String {
        format!("{}\n\n{}", self.system, self.user)
    }
}

fn properties_json(spec: &ToolSpec) -> String {
    let mut props = serde_json::Map::new();
    for p in &spec.params {
        let mut entry = serde_json::Map::new();
        entry.insert("type".into(), p.kind.as_str().into());
        entry.insert("description".into(), p.description.clone().into());
        if !p.required {
            entry.insert("nullable".into(), true.into());
        }
        props.insert(p.name.clone(), entry.into());
    }
    serde_json::to_string(&props).expect("properties serialize")
}

/// Tool listing in the optimizer's system-prompt style.
pub fn optimizer_tool_listing(tools: &[ToolSpec]) -> String {
    let mut out = String::new();
    for t in tools {
        let _ = writeln!(out, "* `{}`: {}", t.name, t.description);
        let _ = writeln!(out, "    Takes inputs: {}", properties_json(t));
        let _ = writeln!(out, "    Returns an output of type: {}", t.output_type);
    }
    out.trim_end().to_string()
}

/// Tool listing in the executor's system-prompt style.
pub fn executor_tool_listing(tools: &[ToolSpec]) -> String {
    let mut out = String::new();
    for t in tools {
        let _ = writeln!(out, "- {}: {}", t.name, t.description);
        let _ = writeln!(out, "  - Inputs: {}", properties_json(t));
        let _ = writeln!(out, "  - Returns: {}", t.output_type);
    }
    out.trim_end().to_string()
}

pub const EMPTY_PREVIEW: &str = "(the context is empty)";

pub fn render_executor_prompt(
    context_preview: &str,
    task: &str,
    tools: &[ToolSpec],
    mode: PromptMode,
) -> Result<RenderedPrompt, PromptError> {
    let listing = executor_tool_listing(tools);
    let (summarize, execute_number) = match mode {
        PromptMode::Training => (EXECUTOR_SUMMARIZE_STEP, "5"),
        PromptMode::Inference => ("", "4"),
    };
    let system = Template::new("executor", EXECUTOR_TEMPLATE).render(&[
        ("tools", &listing),
        ("summarize_step", summarize),
        ("execute_number", execute_number),
    ])?;
    let preview = if context_preview.trim().is_empty() {
        EMPTY_PREVIEW
    } else {
        context_preview
    };
    let user = format!(
        "### CONTEXT PREVIEW AND TASK GIVEN\n#### CONTEXT PREVIEW\n{preview}\n\n#### TASK\n{task}"
    );
    Ok(RenderedPrompt { system, user })
}

/// One prior update on the lineage of the context being optimized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateRecord {
    pub summary: String,
    pub score: Option<f64>,
}

/// One executor run shown to the optimizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackEntry {
    pub task: String,
    pub executor_output: String,
    pub reference: Option<String>,
    pub evaluation: Option<String>,
    pub usage_summary: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DataPackage {
    pub history: Vec<UpdateRecord>,
    pub preview: String,
    pub entries: Vec<FeedbackEntry>,
    /// Updates already tried by earlier siblings forked from the same parent.
    pub siblings: Vec<UpdateRecord>,
}

pub const SIBLING_INSTRUCTION: &str = "The updates below were already attempted on this SAME context by sibling candidates. Pursue a different update strategy from all of them.";

fn score_label(score: Option<f64>) -> String {
    match score {
        Some(s) => format!("validation score: {s:.4}"),
        None => "validation score: n/a".to_string(),
    }
}

impl DataPackage {
    pub fn render(&self) -> Result<String, PromptError> {
        if self.entries.is_empty() {
            return Err(PromptError::EmptyBatch);
        }
        let mut out = String::from("#### A. Context Update History\n");
        if self.history.is_empty() {
            out.push_str("No previous updates.\n");
        }
        for (i, h) in self.history.iter().enumerate() {
            let _ = writeln!(out, "- update {}: {} ({})", i + 1, h.summary, score_label(h.score));
        }
        out.push_str("\n#### B. Context Preview\n");
        if self.preview.trim().is_empty() {
            out.push_str(EMPTY_PREVIEW);
            out.push('\n');
        } else {
            out.push_str(self.preview.trim_end());
            out.push('\n');
        }
        out.push_str("\n#### C. Executor Trajectory & Feedback\n");
        for (i, e) in self.entries.iter().enumerate() {
            let _ = writeln!(out, "##### Example {}", i + 1);
            let _ = writeln!(out, "- task: {}", e.task);
            let _ = writeln!(out, "- executor_output: {}", e.executor_output);
            if let Some(r) = &e.reference {
                let _ = writeln!(out, "- reference answer: {r}");
            }
            if let Some(r) = &e.evaluation {
                let _ = writeln!(out, "- evaluation_result: {r}");
            }
            if let Some(u) = &e.usage_summary {
                let _ = writeln!(out, "- context_usage_summary: {u}");
            }
        }
        if !self.siblings.is_empty() {
            out.push_str("\n#### Previous Attempted Context Updates\n");
            out.push_str(SIBLING_INSTRUCTION);
            out.push('\n');
            for (i, s) in self.siblings.iter().enumerate() {
                let _ = writeln!(out, "- attempt {}: {} ({})", i + 1, s.summary, score_label(s.score));
            }
        }
        Ok(out.trim_end().to_string())
    }
}

pub fn render_optimizer_prompt(
    package: &DataPackage,
    tools: &[ToolSpec],
) -> Result<RenderedPrompt, PromptError> {
    let listing = optimizer_tool_listing(tools);
    let system =
        Template::new("optimizer_system", OPTIMIZER_SYSTEM_TEMPLATE).render(&[("tools", &listing)])?;
    let body = package.render()?;
    let user = Template::new("optimizer_task", OPTIMIZER_TASK_TEMPLATE).render(&[("task", &body)])?;
    Ok(RenderedPrompt { system, user })
}
