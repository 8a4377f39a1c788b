//! Service configuration and the shared wiring of backends and LLM clients.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use dse_core::agent::{LlmClient, ScriptedClient, DEFAULT_MAX_GENS, DEFAULT_RETRY_LIMIT};
use dse_core::design_space::{parse_space, DesignSpace};
use dse_core::dsdb::Dsdb;
use dse_core::evaluator::{DsdbReplay, EvaluatorBackend, Gem5Backend, Gem5JobSpec, SyntheticBackend};

use crate::llm_http::HttpLlmClient;

pub const DEFAULT_API_KEY_ENV: &str = "DSE_LLM_API_KEY";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum BackendChoice {
    #[default]
    Synthetic,
    #[value(name = "dsdb-replay", alias = "dsdb_replay")]
    DsdbReplay,
    Gem5,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "provider", rename_all = "snake_case", deny_unknown_fields)]
pub enum LlmConfig {
    /// Replays a script file; every session starts from its first line.
    Mock { script: PathBuf },
    /// OpenAI-compatible chat completions endpoint.
    Http {
        base_url: String,
        model: String,
        #[serde(default = "default_key_env")]
        api_key_env: String,
    },
}

fn default_key_env() -> String {
    DEFAULT_API_KEY_ENV.to_string()
}

impl LlmConfig {
    /// Parses the `--llm` flag: `mock:FILE` or `http:MODEL@BASE_URL`.
    pub fn from_flag(flag: &str) -> Result<Self> {
        if let Some(path) = flag.strip_prefix("mock:") {
            return Ok(LlmConfig::Mock { script: path.into() });
        }
        if let Some(rest) = flag.strip_prefix("http:") {
            let (model, base_url) = rest
                .split_once('@')
                .context("expected http:MODEL@BASE_URL")?;
            return Ok(LlmConfig::Http {
                base_url: base_url.to_string(),
                model: model.to_string(),
                api_key_env: default_key_env(),
            });
        }
        bail!("unknown LLM provider `{flag}` (expected mock:FILE or http:MODEL@BASE_URL)")
    }

    fn resolve(&mut self, base: &Path) {
        if let LlmConfig::Mock { script } = self {
            *script = base.join(&*script);
        }
    }

    /// Checks that the provider can be built, without building it.
    pub fn check(&self) -> Result<()> {
        match self {
            LlmConfig::Mock { script } => {
                if !script.is_file() {
                    bail!("mock LLM script {} not found", script.display());
                }
            }
            LlmConfig::Http { api_key_env, .. } => {
                if std::env::var(api_key_env).map_or(true, |k| k.is_empty()) {
                    bail!("HTTP LLM provider needs the API key in ${api_key_env}");
                }
            }
        }
        Ok(())
    }

    /// A fresh client; mock clients always start at the top of the script.
    pub fn client(&self) -> Result<Arc<dyn LlmClient>> {
        self.check()?;
        Ok(match self {
            LlmConfig::Mock { script } => Arc::new(
                ScriptedClient::from_file(script).map_err(|e| anyhow::anyhow!(e))?,
            ),
            LlmConfig::Http {
                base_url,
                model,
                api_key_env,
            } => {
                let key = std::env::var(api_key_env).unwrap_or_default();
                Arc::new(HttpLlmClient::new(base_url, model, &key))
            }
        })
    }
}

fn default_listen() -> String {
    "127.0.0.1:8080".into()
}

fn default_max_gens() -> usize {
    DEFAULT_MAX_GENS
}

fn default_retry_limit() -> usize {
    DEFAULT_RETRY_LIMIT
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    pub dsdb_path: PathBuf,
    pub space_path: PathBuf,
    #[serde(default)]
    pub backend: BackendChoice,
    #[serde(default)]
    pub gem5: Option<Gem5JobSpec>,
    pub llm: LlmConfig,
    #[serde(default = "default_listen")]
    pub listen: String,
    #[serde(default = "default_max_gens")]
    pub max_gens: usize,
    #[serde(default = "default_retry_limit")]
    pub retry_limit: usize,
    /// Directory holding `report.txt` and `rows.jsonl` from `run-experiment`.
    #[serde(default)]
    pub report_dir: Option<PathBuf>,
}

impl ServiceConfig {
    /// Reads a TOML config; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: ServiceConfig =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.dsdb_path = base.join(&cfg.dsdb_path);
        cfg.space_path = base.join(&cfg.space_path);
        cfg.report_dir = cfg.report_dir.map(|d| base.join(d));
        cfg.llm.resolve(base);
        if let Some(g) = &mut cfg.gem5 {
            g.runs_dir = base.join(&g.runs_dir);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.backend == BackendChoice::Gem5 && self.gem5.is_none() {
            bail!("the gem5 backend needs a [gem5] job spec");
        }
        self.llm.check()
    }

    /// Directory where session transcripts are kept.
    pub fn sessions_dir(&self) -> PathBuf {
        self.dsdb_path
            .parent()
            .unwrap_or(Path::new("."))
            .join("sessions")
    }
}

pub fn load_space(path: &Path) -> Result<DesignSpace> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading design space {}", path.display()))?;
    parse_space(&text).with_context(|| format!("parsing design space {}", path.display()))
}

pub fn load_jobspec(path: &Path) -> Result<Gem5JobSpec> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading job spec {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing job spec {}", path.display()))
}

pub fn build_backend(
    choice: BackendChoice,
    space: &DesignSpace,
    dsdb: &Arc<Dsdb>,
    gem5: Option<&Gem5JobSpec>,
) -> Result<Arc<dyn EvaluatorBackend>> {
    Ok(match choice {
        BackendChoice::Synthetic => Arc::new(SyntheticBackend::new(space.clone())),
        BackendChoice::DsdbReplay => {
            if dsdb.is_empty() {
                bail!("dsdb-replay backend needs a populated DSDB");
            }
            Arc::new(DsdbReplay::new(dsdb.clone()))
        }
        BackendChoice::Gem5 => {
            let spec = gem5.context("the gem5 backend needs a job spec")?;
            Arc::new(Gem5Backend::new(spec.clone(), space.clone())?)
        }
    })
}
