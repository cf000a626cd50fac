use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use docbot::dialogue::ManagerConfig;
use serde::{Deserialize, Serialize};

/// Service settings, read from a TOML file. Every key is optional.
///
/// ```toml
/// listen = "127.0.0.1:8080"
/// data_dir = "data"
/// matcher_model = "models/matcher.bin"
/// chitchat_model = "models/chitchat.bin"
/// canned_responses = "canned.txt"
/// static_dir = "web_ui/dist"
/// max_document_bytes = 1048576
/// session_ttl_secs = 1800
///
/// [dialogue]
/// score_threshold = 0.3
/// max_utterances = 10
/// include_bot_turns = true
/// retrieval = { k = 2 }
/// decode = { strategy = "greedy", max_len = 20 }
/// ```
///
/// `DOCBOT_LISTEN` and `DOCBOT_DATA_DIR` override `listen` and `data_dir`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub listen: SocketAddr,
    pub data_dir: PathBuf,
    pub matcher_model: Option<PathBuf>,
    pub chitchat_model: Option<PathBuf>,
    pub canned_responses: Option<PathBuf>,
    /// Built web client served under `/`.
    pub static_dir: Option<PathBuf>,
    pub max_document_bytes: usize,
    pub session_ttl_secs: u64,
    /// How often idle sessions are swept.
    pub sweep_interval_secs: u64,
    pub dialogue: ManagerConfig,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            listen: SocketAddr::from(([127, 0, 0, 1], 8080)),
            data_dir: PathBuf::from("data"),
            matcher_model: None,
            chitchat_model: None,
            canned_responses: None,
            static_dir: None,
            max_document_bytes: 1 << 20,
            session_ttl_secs: 30 * 60,
            sweep_interval_secs: 60,
            dialogue: ManagerConfig::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        source: toml::de::Error,
    },
    #[error("{0}")]
    Invalid(String),
}

impl ServiceConfig {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    /// Reads `path`, resolves relative paths against its directory and
    /// applies the environment overrides.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.into(),
            source,
        })?;
        let mut config = Self::from_toml(&text).map_err(|source| ConfigError::Parse {
            path: path.into(),
            source,
        })?;
        if let Some(base) = path.parent() {
            config.resolve_paths(base);
        }
        config.apply_env(|k| std::env::var(k).ok())?;
        config.validate()?;
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.data_dir);
        for p in [
            &mut self.matcher_model,
            &mut self.chitchat_model,
            &mut self.canned_responses,
            &mut self.static_dir,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    pub fn apply_env(&mut self, var: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        if let Some(listen) = var("DOCBOT_LISTEN") {
            self.listen = listen
                .parse()
                .map_err(|e| ConfigError::Invalid(format!("DOCBOT_LISTEN={listen:?}: {e}")))?;
        }
        if let Some(dir) = var("DOCBOT_DATA_DIR") {
            self.data_dir = PathBuf::from(dir);
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.max_document_bytes == 0 {
            return Err(ConfigError::Invalid("max_document_bytes must be positive".into()));
        }
        if self.sweep_interval_secs == 0 {
            return Err(ConfigError::Invalid("sweep_interval_secs must be positive".into()));
        }
        self.dialogue
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))
    }
}
