use std::collections::BTreeSet;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

/// Resource usage reported by an executor in training mode.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageSummary {
    pub helpful_ids: BTreeSet<String>,
    pub unhelpful_ids: BTreeSet<String>,
    /// The summary with tags removed.
    pub free_text: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

fn tag_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"\\?\b(unhelpful|helpful)_resource_id\{([^}]*)\}").expect("valid regex")
    })
}

/// Extracts `\helpful_resource_id{..}` and `\unhelpful_resource_id{..}`
/// tags. Ids may be comma or whitespace separated. An id tagged both ways
/// counts as unhelpful.
pub fn parse_usage_tags(text: &str) -> UsageSummary {
    let re = tag_pattern();
    let mut out = UsageSummary::default();
    for cap in re.captures_iter(text) {
        let target = if &cap[1] == "helpful" {
            &mut out.helpful_ids
        } else {
            &mut out.unhelpful_ids
        };
        target.extend(
            cap[2]
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .map(str::to_string),
        );
    }
    let both: Vec<String> = out
        .helpful_ids
        .intersection(&out.unhelpful_ids)
        .cloned()
        .collect();
    for id in both {
        out.helpful_ids.remove(&id);
        out.warnings
            .push(format!("resource {id} tagged both helpful and unhelpful; counted as unhelpful"));
    }
    out.free_text = re.replace_all(text, "").trim().to_string();
    if out.helpful_ids.is_empty() && out.unhelpful_ids.is_empty() && !re.is_match(text) {
        out.free_text = text.to_string();
    }
    out
}
