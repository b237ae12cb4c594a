//! Turns a [`RunConfig`] into backends, datasets and trainer inputs.

use std::path::Path;
use std::sync::Arc;

use anyhow::{anyhow, Context, Result};

use ctxforge::agents::{
    AgentConfig, ChatBackend, ExecutorAgent, HttpBackend, HttpBackendConfig, PreviewStrategy, API_KEY_ENV,
};
use ctxforge::evaluation::{builtin_reward, Dataset, RewardFn};
use ctxforge::retrieval::HashingEmbedder;
use ctxforge::sim::Scenario;
use ctxforge::tools::{BrowserAdapter, InfoFixtures, LiveBrowser, LiveWikipedia, SearchSetup, WikipediaAdapter};
use ctxforge::training::TrainerSetup;

use crate::config::{usage, BackendKind, RunConfig};

pub const FACT_RECALL: &str = "fact_recall";

type InfoAdapters = (Arc<dyn WikipediaAdapter>, Arc<dyn BrowserAdapter>);

/// Everything a command needs besides the repository.
pub struct Inputs {
    pub config: RunConfig,
    pub scenario: Option<Scenario>,
    pub executor_backend: Arc<dyn ChatBackend>,
    pub optimizer_backend: Arc<dyn ChatBackend>,
    pub train: Dataset,
    pub val: Dataset,
    pub test: Option<Dataset>,
}

fn load_dataset(path: &Path) -> Result<Dataset> {
    Dataset::load(path).with_context(|| format!("cannot load dataset {}", path.display()))
}

fn live_backend(config: &RunConfig, model: &Option<String>, key: &str) -> Result<Arc<dyn ChatBackend>> {
    let b = &config.backend;
    let endpoint = b
        .endpoint
        .clone()
        .ok_or_else(|| usage("live backend needs `backend.endpoint`"))?;
    let model = model
        .clone()
        .ok_or_else(|| usage(format!("live backend needs `backend.{key}`")))?;
    let backend = HttpBackend::from_env(HttpBackendConfig {
        endpoint,
        model,
        temperature: b.temperature,
        timeout_secs: b.timeout_secs,
    })
    .map_err(|e| anyhow!("{e}"))?;
    Ok(Arc::new(backend))
}

impl Inputs {
    pub fn prepare(config: RunConfig) -> Result<Self> {
        let (scenario, executor_backend, optimizer_backend) = match config.backend.kind {
            BackendKind::Scripted => {
                let dir = config
                    .backend
                    .fixtures
                    .clone()
                    .ok_or_else(|| usage("scripted backend needs a fixture directory (`backend.fixtures` or --fixtures)"))?;
                let scenario = Scenario::load(&dir)
                    .with_context(|| format!("cannot load scenario fixtures from {}", dir.display()))?;
                let exec: Arc<dyn ChatBackend> = Arc::new(scenario.executor_backend());
                let opt: Arc<dyn ChatBackend> = Arc::new(scenario.optimizer_backend());
                (Some(scenario), exec, opt)
            }
            BackendKind::Live => {
                if std::env::var_os(API_KEY_ENV).is_none() {
                    return Err(usage(format!("live backend needs {API_KEY_ENV} in the environment")));
                }
                let exec = live_backend(&config, &config.backend.executor_model, "executor_model")?;
                let opt = live_backend(&config, &config.backend.optimizer_model, "optimizer_model")?;
                (None, exec, opt)
            }
        };

        let pick = |path: &Option<std::path::PathBuf>, fallback: Option<&Dataset>, name: &str| -> Result<Dataset> {
            match (path, fallback) {
                (Some(p), _) => load_dataset(p),
                (None, Some(d)) => Ok(d.clone()),
                (None, None) => Err(usage(format!("missing dataset path `data.{name}`"))),
            }
        };
        let train = pick(&config.data.train, scenario.as_ref().map(|s| &s.train), "train")?;
        let val = pick(&config.data.val, scenario.as_ref().map(|s| &s.val), "val")?;
        let test = match (&config.data.test, &scenario) {
            (Some(p), _) => Some(load_dataset(p)?),
            (None, Some(s)) if !s.test.is_empty() => Some(s.test.clone()),
            _ => None,
        };
        if train.is_empty() {
            return Err(anyhow!("training set is empty"));
        }
        if val.is_empty() {
            return Err(anyhow!("validation set is empty"));
        }
        let inputs = Self {
            config,
            scenario,
            executor_backend,
            optimizer_backend,
            train,
            val,
            test,
        };
        inputs.reward(inputs.config.metric())?;
        Ok(inputs)
    }

    pub fn reward(&self, metric: &str) -> Result<Arc<dyn RewardFn>> {
        if metric == FACT_RECALL {
            return match &self.scenario {
                Some(s) => Ok(Arc::new(s.reward())),
                None => Err(usage("metric fact_recall needs a scripted scenario")),
            };
        }
        builtin_reward(metric)
            .map(Arc::from)
            .ok_or_else(|| usage(format!("unknown metric '{metric}' (expected exact_match, chrf++ or {FACT_RECALL})")))
    }

    pub fn search(&self) -> SearchSetup {
        let search_agent = match self.config.backend.kind {
            BackendKind::Scripted => None,
            BackendKind::Live => Some(self.executor_backend.clone()),
        };
        SearchSetup {
            embedder: Arc::new(HashingEmbedder::default()),
            search_agent,
        }
    }

    fn agent(&self, max_steps: usize) -> AgentConfig {
        let a = &self.config.agents;
        AgentConfig {
            max_steps,
            max_retries: a.max_retries,
            backoff_ms: a.backoff_ms,
        }
    }

    pub fn executor(&self) -> ExecutorAgent {
        let a = &self.config.agents;
        let preview = a.preview.unwrap_or(match self.config.backend.kind {
            BackendKind::Scripted => PreviewStrategy::full(),
            BackendKind::Live => PreviewStrategy::default(),
        });
        ExecutorAgent::new(
            self.executor_backend.clone(),
            self.agent(a.executor_max_steps),
            self.search(),
            preview,
            a.payload_cap,
        )
    }

    fn info(&self) -> Result<Option<InfoAdapters>> {
        if !self.config.train.info_seeking {
            return Ok(None);
        }
        let b = &self.config.backend;
        let fixtures = b
            .info_fixtures
            .clone()
            .or_else(|| b.fixtures.as_ref().map(|f| f.join("info")));
        match (b.kind, fixtures) {
            (BackendKind::Live, None) => {
                let wiki = LiveWikipedia::new(b.wikipedia_endpoint.clone()).map_err(|e| anyhow!(e))?;
                let browser = LiveBrowser::new().map_err(|e| anyhow!(e))?;
                Ok(Some((Arc::new(wiki), Arc::new(browser))))
            }
            (_, Some(dir)) => {
                let f = InfoFixtures::load(&dir).map_err(|e| anyhow!(e))?;
                Ok(Some(f.into_adapters()))
            }
            (BackendKind::Scripted, None) => unreachable!("scripted runs always have a fixture directory"),
        }
    }

    pub fn trainer_setup(&self) -> Result<TrainerSetup> {
        Ok(TrainerSetup {
            config: self.config.train.clone(),
            executor: self.executor(),
            optimizer: self.optimizer_backend.clone(),
            optimizer_agent: self.agent(self.config.agents.optimizer_max_steps),
            search: self.search(),
            info: self.info()?,
            payload_cap: self.config.agents.payload_cap,
            reward: self.reward(self.config.metric())?,
            train: self.train.clone(),
            val: self.val.clone(),
        })
    }
}
