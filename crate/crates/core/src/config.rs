//! TOML application config shared by the CLI and the HTTP service.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::chat::ChatConfig;
use crate::corpus::ChunkPolicy;
use crate::embedding::EmbedderConfig;
use crate::ensemble::EnsembleConfig;
use crate::error::{CoachError, Result};
use crate::generation::ProviderConfig;
use crate::lexical::Bm25Params;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServerConfig {
    pub host: String,
    pub port: u16,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            host: "127.0.0.1".into(),
            port: 8080,
        }
    }
}

/// Every section is optional; a missing file section takes its defaults.
/// Relative paths are resolved against the directory holding the config file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct AppConfig {
    /// Index snapshots and session transcripts live under this directory.
    pub data_dir: PathBuf,
    pub manifest: Option<PathBuf>,
    pub system_prompt: Option<PathBuf>,
    pub chunking: ChunkPolicy,
    pub embedding: EmbedderConfig,
    pub bm25: Bm25Params,
    pub ensemble: EnsembleConfig,
    pub chat: ChatConfig,
    pub server: ServerConfig,
    /// The first entry is the default provider. Empty means an offline echo provider.
    pub providers: Vec<ProviderConfig>,
}

impl Default for AppConfig {
    fn default() -> Self {
        AppConfig {
            data_dir: PathBuf::from("var"),
            manifest: None,
            system_prompt: None,
            chunking: ChunkPolicy::default(),
            embedding: EmbedderConfig::default(),
            bm25: Bm25Params::default(),
            ensemble: EnsembleConfig::default(),
            chat: ChatConfig::default(),
            server: ServerConfig::default(),
            providers: Vec::new(),
        }
    }
}

impl AppConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = fs::read_to_string(path).map_err(|e| CoachError::io(path, e))?;
        let mut cfg = Self::from_toml(&raw).map_err(|e| match e {
            CoachError::Parse { message, .. } => {
                CoachError::parse(path.display().to_string(), message)
            }
            other => other,
        })?;
        if let Some(base) = path.parent() {
            cfg.resolve_paths(base);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml(raw: &str) -> Result<Self> {
        toml::from_str(raw).map_err(|e| CoachError::parse("config", e))
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.data_dir);
        if let Some(p) = self.manifest.as_mut() {
            fix(p);
        }
        if let Some(p) = self.system_prompt.as_mut() {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.chunking.validate()?;
        self.embedding.validate()?;
        self.ensemble.validate()?;
        if self.bm25.k1 < 0.0 || !(0.0..=1.0).contains(&self.bm25.b) {
            return Err(CoachError::Config(
                "bm25 requires k1 >= 0 and 0 <= b <= 1".into(),
            ));
        }
        let mut seen = std::collections::HashSet::new();
        for p in &self.providers {
            p.validate()?;
            if !seen.insert(p.provider_id.as_str()) {
                return Err(CoachError::Config(format!(
                    "duplicate provider id {}",
                    p.provider_id
                )));
            }
        }
        Ok(())
    }

    pub fn index_dir(&self) -> PathBuf {
        self.data_dir.join("index")
    }

    pub fn sessions_dir(&self) -> PathBuf {
        self.data_dir.join("sessions")
    }

    /// Provider list with the offline fallback applied.
    pub fn effective_providers(&self) -> Vec<ProviderConfig> {
        if self.providers.is_empty() {
            vec![ProviderConfig::mock("mock")]
        } else {
            self.providers.clone()
        }
    }
}
