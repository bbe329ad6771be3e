use std::path::{Path, PathBuf};

use evidence_core::answerer::{AnswererConfig, Backend};
use evidence_core::assessment::DurationUnits;
use evidence_core::pipelines::PipelineOptions;
use evidence_core::{Error, NormalizationOptions, Result};
use serde::{Deserialize, Serialize};

/// Service configuration, read from one TOML file and then overridden by
/// `EVIDENCE_*` environment variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub listen_addr: String,
    pub store_dir: PathBuf,
    pub vectors_path: Option<PathBuf>,
    pub stopwords_path: Option<PathBuf>,
    pub answerer: AnswererConfig,
    pub normalization: NormalizationOptions,
    pub pipelines: PipelineOptions,
    pub duration_units: DurationUnits,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            listen_addr: "127.0.0.1:8080".into(),
            store_dir: PathBuf::from("evidence-store"),
            vectors_path: None,
            stopwords_path: None,
            answerer: AnswererConfig::default(),
            normalization: NormalizationOptions::default(),
            pipelines: PipelineOptions::default(),
            duration_units: DurationUnits::default(),
        }
    }
}

pub const ENV_VARS: [&str; 7] = [
    "EVIDENCE_LISTEN_ADDR",
    "EVIDENCE_STORE_DIR",
    "EVIDENCE_VECTORS",
    "EVIDENCE_STOPWORDS",
    "EVIDENCE_ANSWERER",
    "EVIDENCE_ANSWERER_ENDPOINT",
    "EVIDENCE_ANSWERER_TIMEOUT_MS",
];

impl ServiceConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    /// Reads `path`, applies environment overrides and validates.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let mut config = Self::from_toml(&text)?;
        config.apply_env(|k| std::env::var(k).ok())?;
        config.validate()?;
        Ok(config)
    }

    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) -> Result<()> {
        if let Some(v) = lookup("EVIDENCE_LISTEN_ADDR") {
            self.listen_addr = v;
        }
        if let Some(v) = lookup("EVIDENCE_STORE_DIR") {
            self.store_dir = v.into();
        }
        if let Some(v) = lookup("EVIDENCE_VECTORS") {
            self.vectors_path = Some(v.into());
        }
        if let Some(v) = lookup("EVIDENCE_STOPWORDS") {
            self.stopwords_path = Some(v.into());
        }
        if let Some(v) = lookup("EVIDENCE_ANSWERER") {
            self.answerer.backend = match v.as_str() {
                "lexical" | "lexical_baseline" => Backend::LexicalBaseline,
                "remote" => Backend::Remote,
                other => return Err(Error::InvalidConfig(format!("unknown answerer backend {other:?}"))),
            };
        }
        if let Some(v) = lookup("EVIDENCE_ANSWERER_ENDPOINT") {
            self.answerer.endpoint_url = Some(v);
        }
        if let Some(v) = lookup("EVIDENCE_ANSWERER_TIMEOUT_MS") {
            self.answerer.timeout_ms = v
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("EVIDENCE_ANSWERER_TIMEOUT_MS={v:?}")))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.answerer.validate()?;
        self.normalization.validate()?;
        if self.listen_addr.trim().is_empty() {
            return Err(Error::InvalidConfig("listen_addr is empty".into()));
        }
        Ok(())
    }
}
