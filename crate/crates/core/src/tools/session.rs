use serde_json::{Map, Value};

use super::{arg_str, ParamKind, ParamSpec, Tool, ToolEnv, ToolResult, ToolSpec};
use crate::agents::{parse_usage_tags, PromptMode};

pub const FINAL_ANSWER_TOOL: &str = "final_answer_tool";
pub const USAGE_SUMMARY_TOOL: &str = "ctx_usage_summary_tool";
pub const PLANNING_TOOL: &str = "planning_tool";

/// Records the agent's answer. Later calls overwrite earlier ones.
pub struct FinalAnswerTool;

impl Tool for FinalAnswerTool {
    fn spec(&self) -> ToolSpec {
        ToolSpec {
            name: FINAL_ANSWER_TOOL.into(),
            description: "Submit the final answer. This ends your turn.".into(),
            params: vec![ParamSpec::required("answer", ParamKind::String, "the final answer")],
            output_type: "string".into(),
        }
    }

    fn invoke(&self, args: &Map<String, Value>, env: &mut ToolEnv<'_>) -> ToolResult {
        let answer = arg_str(args, "answer").unwrap_or_default().to_string();
        env.session.final_answer = Some(answer);
        ToolResult::ok("final answer recorded")
    }
}

/// Training-mode report of which resources helped.
pub struct CtxUsageSummaryTool;

impl Tool for CtxUsageSummaryTool {
    fn spec(&self) -> ToolSpec {
        ToolSpec {
            name: USAGE_SUMMARY_TOOL.into(),
            description: "Report once how the context was used, tagging resources with \\helpful_resource_id{...} or \\unhelpful_resource_id{...}.".into(),
            params: vec![ParamSpec::required("summary", ParamKind::String, "usage summary with resource tags")],
            output_type: "string".into(),
        }
    }

    fn invoke(&self, args: &Map<String, Value>, env: &mut ToolEnv<'_>) -> ToolResult {
        if env.session.prompt_mode == PromptMode::Inference {
            return ToolResult::error("ctx_usage_summary_tool is only available during training");
        }
        if env.session.usage_summary.is_some() {
            return ToolResult::error(
                "you must call ctx_usage_summary_tool only one time; the summary was already recorded",
            );
        }
        let parsed = parse_usage_tags(arg_str(args, "summary").unwrap_or_default());
        let mut msg = format!(
            "usage summary recorded ({} helpful, {} unhelpful)",
            parsed.helpful_ids.len(),
            parsed.unhelpful_ids.len()
        );
        for w in &parsed.warnings {
            msg.push_str(&format!("\nwarning: {w}"));
        }
        env.session.usage_summary = Some(parsed);
        ToolResult::ok(msg)
    }
}

pub struct PlanningTool;

impl Tool for PlanningTool {
    fn spec(&self) -> ToolSpec {
        ToolSpec {
            name: PLANNING_TOOL.into(),
            description: "Record an actionable plan for this optimization step.".into(),
            params: vec![ParamSpec::required("plan", ParamKind::String, "the plan")],
            output_type: "string".into(),
        }
    }

    fn invoke(&self, args: &Map<String, Value>, env: &mut ToolEnv<'_>) -> ToolResult {
        let plan = arg_str(args, "plan").unwrap_or_default().to_string();
        env.session.plans.push(plan.clone());
        if plan.trim().is_empty() {
            ToolResult::ok("warning: the plan is empty")
        } else {
            ToolResult::ok(format!("plan recorded:\n{plan}"))
        }
    }
}
