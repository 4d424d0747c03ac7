//! Service configuration: a TOML file plus environment overrides.
//!
//! | variable           | field                                 |
//! |--------------------|---------------------------------------|
//! | `COMPANION_CORPUS` | `corpus`                              |
//! | `COMPANION_LOG`    | `log`                                 |
//! | `COMPANION_BIND`   | `bind`                                |
//! | `COMPANION_SEED`   | `assignment = seeded_random` with seed |

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event::Condition;
use crate::search::{Bm25Params, DEFAULT_SNIPPET_WIDTH};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum AssignmentMode {
    SeededRandom {
        seed: u64,
    },
    /// Companion first, then alternating.
    Alternating,
    Forced {
        condition: Condition,
    },
}

impl Default for AssignmentMode {
    fn default() -> Self {
        AssignmentMode::SeededRandom { seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub corpus: PathBuf,
    pub catalog: PathBuf,
    pub tasks: PathBuf,
    pub log: PathBuf,
    pub page_size: usize,
    pub heartbeat_ms: u64,
    pub assignment: AssignmentMode,
    pub bind: String,
    pub bm25: Bm25Params,
    pub snippet_width: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            corpus: "data/corpus.jsonl".into(),
            catalog: "data/catalog.toml".into(),
            tasks: "data/tasks.toml".into(),
            log: "events.jsonl".into(),
            page_size: 10,
            heartbeat_ms: 5000,
            assignment: AssignmentMode::default(),
            bind: "127.0.0.1:8080".into(),
            bm25: Bm25Params::default(),
            snippet_width: DEFAULT_SNIPPET_WIDTH,
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("failed to read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config is not valid TOML: {0}")]
    Syntax(String),
    #[error("invalid value for {field}: {reason}")]
    Invalid { field: &'static str, reason: String },
}

impl ServiceConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let config: Self = toml::from_str(&text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn apply_env(&mut self) -> Result<(), ConfigError> {
        self.apply_env_with(|key| std::env::var(key).ok())
    }

    pub fn apply_env_with(
        &mut self,
        lookup: impl Fn(&str) -> Option<String>,
    ) -> Result<(), ConfigError> {
        if let Some(v) = lookup("COMPANION_CORPUS") {
            self.corpus = v.into();
        }
        if let Some(v) = lookup("COMPANION_LOG") {
            self.log = v.into();
        }
        if let Some(v) = lookup("COMPANION_BIND") {
            self.bind = v;
        }
        if let Some(v) = lookup("COMPANION_SEED") {
            let seed = v.parse().map_err(|_| ConfigError::Invalid {
                field: "COMPANION_SEED",
                reason: format!("`{v}` is not an unsigned integer"),
            })?;
            self.assignment = AssignmentMode::SeededRandom { seed };
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.page_size < 1 {
            return Err(ConfigError::Invalid {
                field: "page_size",
                reason: "must be at least 1".into(),
            });
        }
        if self.heartbeat_ms < 1000 {
            return Err(ConfigError::Invalid {
                field: "heartbeat_ms",
                reason: "must be at least 1000".into(),
            });
        }
        if self.snippet_width < 1 {
            return Err(ConfigError::Invalid {
                field: "snippet_width",
                reason: "must be at least 1".into(),
            });
        }
        Ok(())
    }
}
