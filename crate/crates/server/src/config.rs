//! Service configuration file (TOML). Paths are resolved against the
//! directory holding the file. Credentials never live here: the live
//! provider names an environment variable instead.

use std::path::{Path, PathBuf};
use std::time::Duration;

use cellx_core::agent::PolicyOverrides;
use serde::Deserialize;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parsing service config: {0}")]
    Parse(String),
    #[error("invalid service config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    #[serde(default = "default_listen")]
    pub listen: String,
    #[serde(default)]
    pub station_seed: u64,
    /// Directory of markdown / text documents indexed at startup.
    #[serde(default)]
    pub knowledge_dir: Option<PathBuf>,
    /// Prebuilt index written by `cellx ingest`. Takes precedence over
    /// `knowledge_dir`. With neither, the shipped manual is used.
    #[serde(default)]
    pub knowledge_index: Option<PathBuf>,
    #[serde(default)]
    pub band_table: Option<PathBuf>,
    /// JSON Lines audit file, appended to. In memory only when absent.
    #[serde(default)]
    pub audit_path: Option<PathBuf>,
    /// Wall-clock seconds between background station ticks; 0 disables.
    #[serde(default = "default_tick_interval")]
    pub tick_interval_s: f64,
    #[serde(default)]
    pub policy: PolicyOverrides,
    #[serde(default)]
    pub provider: ProviderConfig,
}

fn default_listen() -> String {
    "127.0.0.1:8080".into()
}

fn default_tick_interval() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProviderConfig {
    /// Every session replays the script of a scenario file (empty script
    /// when none is given, so turns end in provider_error).
    Scripted {
        #[serde(default)]
        scenario: Option<PathBuf>,
    },
    /// OpenAI-style `/chat/completions` endpoint.
    ChatCompletions {
        endpoint: String,
        model: String,
        api_key_env: String,
        #[serde(default = "default_timeout_s")]
        timeout_s: u64,
    },
}

fn default_timeout_s() -> u64 {
    60
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig::Scripted { scenario: None }
    }
}

impl ProviderConfig {
    pub fn timeout(&self) -> Option<Duration> {
        match self {
            ProviderConfig::ChatCompletions { timeout_s, .. } => Some(Duration::from_secs(*timeout_s)),
            ProviderConfig::Scripted { .. } => None,
        }
    }
}

impl Default for ServiceConfig {
    fn default() -> Self {
        toml::from_str("").expect("empty config is valid")
    }
}

impl ServiceConfig {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        // Only the message: the full error quotes the offending source line,
        // which could carry a pasted secret.
        let mut cfg: ServiceConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.message().to_string()))?;
        let join = |p: &mut Option<PathBuf>| {
            if let Some(p) = p.as_mut() {
                *p = base_dir.join(&*p);
            }
        };
        join(&mut cfg.knowledge_dir);
        join(&mut cfg.knowledge_index);
        join(&mut cfg.band_table);
        join(&mut cfg.audit_path);
        if let ProviderConfig::Scripted { scenario } = &mut cfg.provider {
            join(scenario);
        }
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path.parent().unwrap_or(Path::new("")))
    }

    pub fn check(&self) -> Result<(), ConfigError> {
        if !(self.tick_interval_s >= 0.0 && self.tick_interval_s.is_finite()) {
            return Err(ConfigError::Invalid("tick_interval_s must be >= 0".into()));
        }
        if let ProviderConfig::ChatCompletions { api_key_env, timeout_s, .. } = &self.provider {
            if api_key_env.is_empty() {
                return Err(ConfigError::Invalid("provider.api_key_env must name an environment variable".into()));
            }
            if *timeout_s == 0 {
                return Err(ConfigError::Invalid("provider.timeout_s must be positive".into()));
            }
        }
        Ok(())
    }
}
