//! Run configuration: one TOML file per run, secrets from the environment.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use ctxforge::agents::PreviewStrategy;
use ctxforge::tools::DEFAULT_PAYLOAD_CAP;
use ctxforge::training::TrainConfig;

/// A problem with the invocation or the config file (exit code 1).
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    /// Scripted agents driven by a scenario fixture directory.
    Scripted,
    /// OpenAI-compatible chat endpoint; needs `CTXFORGE_API_KEY`.
    Live,
}

fn default_timeout() -> u64 {
    120
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    /// Scenario fixture directory (scripted).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixtures: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub executor_model: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimizer_model: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    /// Offline Wikipedia/browser fixtures for information seeking.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub info_fixtures: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wikipedia_endpoint: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataPaths {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub val: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test: Option<PathBuf>,
}

impl DataPaths {
    pub fn is_empty(&self) -> bool {
        self.train.is_none() && self.val.is_none() && self.test.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentSettings {
    pub executor_max_steps: usize,
    pub optimizer_max_steps: usize,
    pub max_retries: usize,
    pub backoff_ms: u64,
    pub payload_cap: usize,
    /// Executor preview; defaults to the full context for scripted runs
    /// and embedding top-8 at preview detail for live runs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preview: Option<PreviewStrategy>,
}

impl Default for AgentSettings {
    fn default() -> Self {
        Self {
            executor_max_steps: 12,
            optimizer_max_steps: 24,
            max_retries: 3,
            backoff_ms: 500,
            payload_cap: DEFAULT_PAYLOAD_CAP,
            preview: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Reward and evaluation metric: exact_match, chrf++ or fact_recall.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "DataPaths::is_empty")]
    pub data: DataPaths,
    pub backend: BackendConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub agents: AgentSettings,
}

impl RunConfig {
    /// Parses TOML; errors carry the dotted path of the offending key.
    pub fn parse(text: &str, origin: &Path) -> anyhow::Result<Self> {
        let de = toml::Deserializer::new(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            let msg = inner.message().trim().to_string();
            if path == "." {
                usage(format!("{}: {msg}", origin.display()))
            } else {
                usage(format!("{}: key `{path}`: {msg}", origin.display()))
            }
        })?;
        cfg.train
            .validate()
            .map_err(|e| usage(format!("{}: [train] {e}", origin.display())))?;
        Ok(cfg)
    }

    /// Loads `path` and resolves relative paths against its directory.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text, path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(path) = p {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        };
        fix(&mut self.out);
        fix(&mut self.data.train);
        fix(&mut self.data.val);
        fix(&mut self.data.test);
        fix(&mut self.backend.fixtures);
        fix(&mut self.backend.info_fixtures);
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn metric(&self) -> &str {
        match (&self.metric, self.backend.kind) {
            (Some(m), _) => m,
            (None, BackendKind::Scripted) => "fact_recall",
            (None, BackendKind::Live) => "chrf++",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig, String> {
        RunConfig::parse(text, Path::new("run.toml")).map_err(|e| e.to_string())
    }

    #[test]
    fn minimal_scripted_config() {
        let cfg = parse("[backend]\nkind = \"scripted\"\nfixtures = \"fx\"\n").unwrap();
        assert_eq!(cfg.train, TrainConfig::default());
        assert_eq!(cfg.metric(), "fact_recall");
        let back = parse(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn errors_name_the_key() {
        let e = parse("[backend]\nkind = \"scripted\"\n[train]\nbeam_widht = 2\n").unwrap_err();
        assert!(e.contains("beam_widht"), "{e}");
        let e = parse("[backend]\nkind = \"scripted\"\n[train]\nbeam_width = \"two\"\n").unwrap_err();
        assert!(e.contains("train.beam_width"), "{e}");
        let e = parse("[backend]\nkind = \"scripted\"\n[train]\nbeam_width = 0\n").unwrap_err();
        assert!(e.contains("beam_width"), "{e}");
        let e = parse("[backend]\nkind = \"remote\"\n").unwrap_err();
        assert!(e.contains("backend.kind"), "{e}");
        let e = parse("metric = \"em\"\n").unwrap_err();
        assert!(e.contains("backend"), "{e}");
        let e = parse("[backend]\nkind = \"live\"\n[agents]\npayload = 3\n").unwrap_err();
        assert!(e.contains("payload"), "{e}");
    }

    #[test]
    fn relative_paths_resolve_against_config_dir() {
        let mut cfg = parse("out = \"runs/a\"\n[backend]\nkind = \"scripted\"\nfixtures = \"fx\"\n[data]\ntest = \"/abs/t.jsonl\"\n").unwrap();
        cfg.resolve_paths(Path::new("/cfg"));
        assert_eq!(cfg.out.unwrap(), Path::new("/cfg/runs/a"));
        assert_eq!(cfg.backend.fixtures.unwrap(), Path::new("/cfg/fx"));
        assert_eq!(cfg.data.test.unwrap(), Path::new("/abs/t.jsonl"));
    }
}
