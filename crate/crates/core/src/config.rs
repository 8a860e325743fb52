use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::layout::LayoutParams;
use crate::orchestration::DEFAULT_MAX_DEPTH;
use crate::search::DEFAULT_DECAY;

pub const DEFAULT_PAGE_SIZE: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Capability {
    Read,
    Annotate,
    Review,
    Ingest,
    Admin,
}

impl Capability {
    pub const ALL: [Capability; 5] = [
        Capability::Read,
        Capability::Annotate,
        Capability::Review,
        Capability::Ingest,
        Capability::Admin,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Capability::Read => "read",
            Capability::Annotate => "annotate",
            Capability::Review => "review",
            Capability::Ingest => "ingest",
            Capability::Admin => "admin",
        }
    }
}

impl fmt::Display for Capability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Capability {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Capability::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| ConfigError::Invalid(format!("unknown capability {s:?}")))
    }
}

/// One entry of the static token table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenGrant {
    pub user: String,
    pub capabilities: BTreeSet<Capability>,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config file {path}: {message}")]
    File { path: PathBuf, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn default_modules() -> Vec<String> {
    ["speaker-detection", "transcriber", "image-analyzer", "ner"]
        .into_iter()
        .map(String::from)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub bind: String,
    pub port: u16,
    /// Holds `provenance.ndjson` and `objects/`. In-memory when absent.
    pub data_dir: Option<PathBuf>,
    pub schema_path: Option<PathBuf>,
    pub ontology_path: Option<PathBuf>,
    pub gazetteer_path: Option<PathBuf>,
    pub modules: Vec<String>,
    pub max_cascade_depth: u32,
    pub workers: usize,
    pub search_decay: f64,
    pub layout: LayoutParams,
    pub page_size: usize,
    pub tokens: BTreeMap<String, TokenGrant>,
    /// Stamps every entry with this time; for reproducible logs.
    pub fixed_timestamp: Option<DateTime<Utc>>,
    pub case_title: String,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            bind: "127.0.0.1".into(),
            port: 8080,
            data_dir: None,
            schema_path: None,
            ontology_path: None,
            gazetteer_path: None,
            modules: default_modules(),
            max_cascade_depth: DEFAULT_MAX_DEPTH,
            workers: 1,
            search_decay: DEFAULT_DECAY,
            layout: LayoutParams::default(),
            page_size: DEFAULT_PAGE_SIZE,
            tokens: BTreeMap::new(),
            fixed_timestamp: None,
            case_title: "Untitled case".into(),
        }
    }
}

impl EngineConfig {
    pub fn from_json(json: &str) -> Result<Self, ConfigError> {
        let config: EngineConfig = serde_json::from_str(json).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::File {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::from_json(&text).map_err(|e| ConfigError::File {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.workers == 0 {
            return Err(ConfigError::Invalid("workers must be at least 1".into()));
        }
        if self.page_size == 0 {
            return Err(ConfigError::Invalid("page_size must be at least 1".into()));
        }
        if !(self.search_decay > 0.0 && self.search_decay < 1.0) {
            return Err(ConfigError::Invalid("search_decay must lie in (0, 1)".into()));
        }
        self.layout
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        for (token, grant) in &self.tokens {
            if token.len() < 16 {
                return Err(ConfigError::Invalid(format!(
                    "token for {} is shorter than 16 characters",
                    grant.user
                )));
            }
        }
        Ok(())
    }

    pub fn log_path(&self) -> Option<PathBuf> {
        self.data_dir.as_ref().map(|d| d.join("provenance.ndjson"))
    }

    pub fn objects_path(&self) -> Option<PathBuf> {
        self.data_dir.as_ref().map(|d| d.join("objects"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_with_defaults() {
        let c = EngineConfig::from_json(
            r#"{"port": 9000, "tokens": {"0123456789abcdef0123": {"user": "ana", "capabilities": ["read", "review"]}},
                "fixed_timestamp": "2024-01-01T00:00:00Z"}"#,
        )
        .unwrap();
        assert_eq!(c.port, 9000);
        assert_eq!(c.modules.len(), 4);
        assert_eq!(c.page_size, DEFAULT_PAGE_SIZE);
        let grant = c.tokens.values().next().unwrap();
        assert!(grant.capabilities.contains(&Capability::Review));
        assert!(c.fixed_timestamp.is_some());
    }

    #[test]
    fn rejects_bad_values() {
        assert!(EngineConfig::from_json(r#"{"workers": 0}"#).is_err());
        assert!(EngineConfig::from_json(r#"{"prot": 1}"#).is_err());
        assert!(EngineConfig::from_json(r#"{"tokens": {"short": {"user": "a", "capabilities": []}}}"#).is_err());
        assert!(EngineConfig::from_json(r#"{"tokens": {"0123456789abcdef0123": {"user": "a", "capabilities": ["root"]}}}"#).is_err());
    }
}
