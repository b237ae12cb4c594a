use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

/// One tool invocation requested by an agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    pub name: String,
    pub arguments: Map<String, Value>,
    /// The blob text the call was parsed from.
    #[serde(default)]
    pub raw: String,
}

impl ToolCall {
    pub fn new(name: impl Into<String>, arguments: Map<String, Value>) -> Self {
        let mut call = Self {
            name: name.into(),
            arguments,
            raw: String::new(),
        };
        call.raw = call.blob_json();
        call
    }

    /// Builds a call from a JSON object literal of arguments.
    pub fn with_args(name: impl Into<String>, arguments: Value) -> Self {
        match arguments {
            Value::Object(map) => Self::new(name, map),
            other => panic!("tool arguments must be a JSON object, got {other}"),
        }
    }

    fn blob_json(&self) -> String {
        let blob = serde_json::json!({"name": self.name, "arguments": self.arguments});
        serde_json::to_string(&blob).expect("blob serializes")
    }

    /// Identity of the call for duplicate detection: name plus arguments
    /// with keys in sorted order.
    pub fn signature(&self) -> String {
        format!(
            "{}:{}",
            self.name,
            serde_json::to_string(&self.arguments).expect("arguments serialize")
        )
    }
}

/// Renders a call in the action-blob text protocol.
pub fn format_action(call: &ToolCall) -> String {
    let blob = serde_json::json!({"name": call.name, "arguments": call.arguments});
    format!(
        "Action:\n{}",
        serde_json::to_string_pretty(&blob).expect("blob serializes")
    )
}

/// End index (inclusive) of the balanced JSON object opening at `start`,
/// skipping braces inside string literals.
fn matching_brace(bytes: &[u8], start: usize) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate().skip(start) {
        if in_string {
            match b {
                _ if escaped => escaped = false,
                b'\\' => escaped = true,
                b'"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(i);
                }
            }
            _ => {}
        }
    }
    None
}

fn as_call(candidate: &str) -> Option<ToolCall> {
    let Ok(Value::Object(mut obj)) = serde_json::from_str::<Value>(candidate) else {
        return None;
    };
    let name = match obj.remove("name") {
        Some(Value::String(s)) if !s.trim().is_empty() => s,
        _ => return None,
    };
    let arguments = match obj.remove("arguments") {
        Some(Value::Object(m)) => m,
        _ => return None,
    };
    Some(ToolCall {
        name,
        arguments,
        raw: candidate.to_string(),
    })
}

/// Extracts the last well-formed action blob (`{"name": .., "arguments":
/// {..}}`) from assistant text. Outer objects are preferred over objects
/// nested inside them.
pub fn parse_action_blob(text: &str) -> Option<ToolCall> {
    let bytes = text.as_bytes();
    let mut last = None;
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] != b'{' {
            i += 1;
            continue;
        }
        match matching_brace(bytes, i) {
            Some(end) => match as_call(&text[i..=end]) {
                Some(call) => {
                    last = Some(call);
                    i = end + 1;
                }
                None => i += 1,
            },
            None => i += 1,
        }
    }
    last
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn parses_prompt_shaped_blob() {
        let text = "Thought: done.\nAction:\n{\n  \"name\": \"final_answer_tool\",\n  \"arguments\": {\"answer\": \"42\"}\n}";
        let call = parse_action_blob(text).unwrap();
        assert_eq!(call.name, "final_answer_tool");
        assert_eq!(call.arguments["answer"], json!("42"));
    }

    #[test]
    fn last_valid_blob_wins() {
        let text = r#"Action: {"name": "a", "arguments": {}} then Action: {"name": "b", "arguments": {"x": 1}} and {"broken": "#;
        assert_eq!(parse_action_blob(text).unwrap().name, "b");
    }

    #[test]
    fn malformed_or_absent_is_none() {
        assert!(parse_action_blob("no blob here").is_none());
        assert!(parse_action_blob(r#"{"name": "a", "arguments": {"x": 1}"#).is_none());
        assert!(parse_action_blob(r#"{"name": "", "arguments": {}}"#).is_none());
        assert!(parse_action_blob(r#"{"name": "a", "arguments": "x"}"#).is_none());
    }

    #[test]
    fn braces_inside_strings_are_ignored() {
        let text = r#"{"name": "add", "arguments": {"content": "use } and { freely"}}"#;
        let call = parse_action_blob(text).unwrap();
        assert_eq!(call.arguments["content"], json!("use } and { freely"));
    }

    #[test]
    fn roundtrip() {
        let call = ToolCall::with_args("context_manage_tool", json!({"action": "add", "k": 3}));
        let back = parse_action_blob(&format_action(&call)).unwrap();
        assert_eq!(back.name, call.name);
        assert_eq!(back.arguments, call.arguments);
    }
}
