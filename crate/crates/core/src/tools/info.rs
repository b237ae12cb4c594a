//! Information-seeking tools. Each delegates to an adapter: a fixture
//! adapter that serves recorded data offline, or a live HTTP adapter.
//!
//! Fixture layout, one JSON record per line:
//!
//! ```text
//! wikipedia.jsonl  {"query": "...", "pages": [{"title": "...", "extract": "..."}]}
//! browser.jsonl    {"instruction": "...", "text": "..."}
//! ```

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::sync::{Arc, OnceLock};
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{arg_str, arg_usize, cap_text, ParamKind, ParamSpec, Tool, ToolEnv, ToolResult, ToolSpec};

pub const WIKIPEDIA_TOOL: &str = "wikipedia_search_tool";
pub const BROWSER_TOOL: &str = "auto_browser_use_tool";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WikiPage {
    pub title: String,
    pub extract: String,
}

pub trait WikipediaAdapter: Send + Sync {
    fn search(&self, query: &str, max_pages: usize) -> Result<Vec<WikiPage>, String>;
}

pub trait BrowserAdapter: Send + Sync {
    fn browse(&self, instruction: &str) -> Result<String, String>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WikipediaFixture {
    pub query: String,
    pub pages: Vec<WikiPage>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BrowserFixture {
    pub instruction: String,
    pub text: String,
}

fn fixture_key(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

#[derive(Debug, Clone, Default)]
pub struct FixtureWikipedia {
    pages: HashMap<String, Vec<WikiPage>>,
}

impl FixtureWikipedia {
    pub fn new(records: impl IntoIterator<Item = WikipediaFixture>) -> Self {
        Self {
            pages: records
                .into_iter()
                .map(|r| (fixture_key(&r.query), r.pages))
                .collect(),
        }
    }
}

impl WikipediaAdapter for FixtureWikipedia {
    fn search(&self, query: &str, max_pages: usize) -> Result<Vec<WikiPage>, String> {
        Ok(self
            .pages
            .get(&fixture_key(query))
            .map(|p| p.iter().take(max_pages).cloned().collect())
            .unwrap_or_default())
    }
}

#[derive(Debug, Clone, Default)]
pub struct FixtureBrowser {
    sessions: HashMap<String, String>,
}

impl FixtureBrowser {
    pub fn new(records: impl IntoIterator<Item = BrowserFixture>) -> Self {
        Self {
            sessions: records
                .into_iter()
                .map(|r| (fixture_key(&r.instruction), r.text))
                .collect(),
        }
    }
}

impl BrowserAdapter for FixtureBrowser {
    fn browse(&self, instruction: &str) -> Result<String, String> {
        self.sessions
            .get(&fixture_key(instruction))
            .cloned()
            .ok_or_else(|| format!("no fixture recorded for instruction '{instruction}'"))
    }
}

/// Both fixture adapters loaded from one directory. Missing files yield
/// empty adapters.
#[derive(Debug, Clone, Default)]
pub struct InfoFixtures {
    pub wikipedia: FixtureWikipedia,
    pub browser: FixtureBrowser,
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, String> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(format!("{}: {e}", path.display())),
    };
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| serde_json::from_str(l).map_err(|e| format!("{}:{}: {e}", path.display(), n + 1)))
        .collect()
}

impl InfoFixtures {
    pub fn load(dir: &Path) -> Result<Self, String> {
        Ok(Self {
            wikipedia: FixtureWikipedia::new(read_jsonl::<WikipediaFixture>(&dir.join("wikipedia.jsonl"))?),
            browser: FixtureBrowser::new(read_jsonl::<BrowserFixture>(&dir.join("browser.jsonl"))?),
        })
    }

    pub fn into_adapters(self) -> (Arc<dyn WikipediaAdapter>, Arc<dyn BrowserAdapter>) {
        (Arc::new(self.wikipedia), Arc::new(self.browser))
    }
}

fn http_client(timeout_secs: u64) -> Result<reqwest::blocking::Client, String> {
    reqwest::blocking::Client::builder()
        .timeout(Duration::from_secs(timeout_secs))
        .user_agent("ctxforge/0.1")
        .build()
        .map_err(|e| e.to_string())
}

/// MediaWiki search + plain-text intro extracts.
pub struct LiveWikipedia {
    endpoint: String,
    client: reqwest::blocking::Client,
}

impl LiveWikipedia {
    pub const DEFAULT_ENDPOINT: &'static str = "https://en.wikipedia.org/w/api.php";

    pub fn new(endpoint: Option<String>) -> Result<Self, String> {
        Ok(Self {
            endpoint: endpoint.unwrap_or_else(|| Self::DEFAULT_ENDPOINT.to_string()),
            client: http_client(30)?,
        })
    }
}

impl WikipediaAdapter for LiveWikipedia {
    fn search(&self, query: &str, max_pages: usize) -> Result<Vec<WikiPage>, String> {
        let limit = max_pages.max(1).to_string();
        let resp: Value = self
            .client
            .get(&self.endpoint)
            .query(&[
                ("action", "query"),
                ("format", "json"),
                ("generator", "search"),
                ("gsrsearch", query),
                ("gsrlimit", limit.as_str()),
                ("prop", "extracts"),
                ("exintro", "1"),
                ("explaintext", "1"),
            ])
            .send()
            .and_then(|r| r.error_for_status())
            .map_err(|e| format!("wikipedia request failed: {e}"))?
            .json()
            .map_err(|e| format!("wikipedia response unreadable: {e}"))?;
        let mut pages: Vec<(i64, WikiPage)> = resp["query"]["pages"]
            .as_object()
            .map(|m| {
                m.values()
                    .map(|p| {
                        (
                            p["index"].as_i64().unwrap_or(i64::MAX),
                            WikiPage {
                                title: p["title"].as_str().unwrap_or_default().to_string(),
                                extract: p["extract"].as_str().unwrap_or_default().to_string(),
                            },
                        )
                    })
                    .collect()
            })
            .unwrap_or_default();
        pages.sort_by_key(|(i, _)| *i);
        Ok(pages.into_iter().map(|(_, p)| p).take(max_pages).collect())
    }
}

/// Fetches the first URL in the instruction and returns its visible text.
/// Not a browser: no scripting, no navigation.
pub struct LiveBrowser {
    client: reqwest::blocking::Client,
}

impl LiveBrowser {
    pub fn new() -> Result<Self, String> {
        Ok(Self {
            client: http_client(30)?,
        })
    }
}

fn strip_html(html: &str) -> String {
    static BLOCKS: OnceLock<Regex> = OnceLock::new();
    static TAGS: OnceLock<Regex> = OnceLock::new();
    let blocks = BLOCKS.get_or_init(|| {
        Regex::new(r"(?is)<(script|style|noscript)[^>]*>.*?</(script|style|noscript)>").expect("regex")
    });
    let tags = TAGS.get_or_init(|| Regex::new(r"(?s)<[^>]+>").expect("regex"));
    let text = blocks.replace_all(html, " ");
    let text = tags.replace_all(&text, " ");
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

impl BrowserAdapter for LiveBrowser {
    fn browse(&self, instruction: &str) -> Result<String, String> {
        let url = instruction
            .split_whitespace()
            .find(|w| w.starts_with("http://") || w.starts_with("https://"))
            .ok_or("the live browser adapter needs a URL in the instruction")?;
        let body = self
            .client
            .get(url)
            .send()
            .and_then(|r| r.error_for_status())
            .and_then(|r| r.text())
            .map_err(|e| format!("navigation failed: {e}"))?;
        Ok(strip_html(&body))
    }
}

pub struct WikipediaSearchTool {
    adapter: Arc<dyn WikipediaAdapter>,
    extract_cap: usize,
}

impl WikipediaSearchTool {
    pub fn new(adapter: Arc<dyn WikipediaAdapter>, extract_cap: usize) -> Self {
        Self {
            adapter,
            extract_cap,
        }
    }
}

impl Tool for WikipediaSearchTool {
    fn spec(&self) -> ToolSpec {
        ToolSpec {
            name: WIKIPEDIA_TOOL.into(),
            description: "Search Wikipedia and return page titles with their introductory extracts.".into(),
            params: vec![
                ParamSpec::required("query", ParamKind::String, "search query"),
                ParamSpec::optional("max_pages", ParamKind::Integer, "maximum pages to return (default 3)"),
            ],
            output_type: "string".into(),
        }
    }

    fn invoke(&self, args: &Map<String, Value>, _env: &mut ToolEnv<'_>) -> ToolResult {
        let query = arg_str(args, "query").unwrap_or_default();
        let max_pages = arg_usize(args, "max_pages").unwrap_or(3);
        match self.adapter.search(query, max_pages) {
            Err(e) => ToolResult::error(e),
            Ok(pages) if pages.is_empty() => ToolResult::ok(format!("no matches for '{query}'")),
            Ok(pages) => ToolResult::ok(
                pages
                    .iter()
                    .map(|p| {
                        let extract = cap_text(&p.extract, self.extract_cap).unwrap_or_else(|| p.extract.clone());
                        format!("## {}\n{}", p.title, extract)
                    })
                    .collect::<Vec<_>>()
                    .join("\n\n"),
            ),
        }
    }
}

pub struct BrowserTool {
    adapter: Arc<dyn BrowserAdapter>,
}

impl BrowserTool {
    pub fn new(adapter: Arc<dyn BrowserAdapter>) -> Self {
        Self { adapter }
    }
}

impl Tool for BrowserTool {
    fn spec(&self) -> ToolSpec {
        ToolSpec {
            name: BROWSER_TOOL.into(),
            description: "Browse the web following a natural-language instruction and return the extracted page text.".into(),
            params: vec![ParamSpec::required("instruction", ParamKind::String, "what to look up or which page to read")],
            output_type: "string".into(),
        }
    }

    fn invoke(&self, args: &Map<String, Value>, _env: &mut ToolEnv<'_>) -> ToolResult {
        match self.adapter.browse(arg_str(args, "instruction").unwrap_or_default()) {
            Ok(text) => ToolResult::ok(text),
            Err(e) => ToolResult::error(e),
        }
    }
}
