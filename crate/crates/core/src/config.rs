//! TOML configuration with environment overrides.
//!
//! ```toml
//! [corpus]
//! path = "corpus"
//!
//! [engine]
//! k_evidence = 3
//! max_rounds = 3
//! theta_new = 0.5
//! workers = 8
//! window = 50
//! cutoff = 20
//!
//! [encoder]
//! kind = "hashing"          # or "remote"
//! dimension = 256
//!
//! [navigator]
//! kind = "heuristic"        # "scripted" (needs `script`) or "remote"
//! per_channel_limit = 50
//!
//! [scorer]
//! kind = "keyword"          # or "remote"
//! endpoint = { url = "http://localhost:8080/v1", model = "judge-1" }
//!
//! [listwise]
//! kind = "identity"         # or "remote"
//!
//! [rates."judge-1"]
//! input_usd_per_mtok = 1.0
//! output_usd_per_mtok = 2.0
//! ```
//!
//! `LITSEARCH_CORPUS` overrides the corpus path. For each backend role
//! (`ENCODER`, `NAVIGATOR`, `SCORER`, `LISTWISE`), `LITSEARCH_<ROLE>_URL`,
//! `LITSEARCH_<ROLE>_MODEL` and `LITSEARCH_<ROLE>_API_KEY` override the
//! endpoint. API keys are only ever read from the environment.

use crate::backend::BackendFailure;
use crate::encoder::{EncoderBackend, HashingEncoder, REFERENCE_DIMENSION};
use crate::orchestrator::{
    Backends, CostError, EngineConfig, HeuristicNavigator, NavigatorBackend, Rate, RateTable, ScriptedNavigator,
};
use crate::remote::{Endpoint, RemoteEncoder, RemoteListwise, RemoteNavigator, RemoteScorer};
use crate::rerank::{IdentityListwise, ListwiseBackend};
use crate::verify::{KeywordOverlapScorer, ScorerBackend};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use thiserror::Error;

pub const ENV_PREFIX: &str = "LITSEARCH_";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Rate(#[from] CostError),
    #[error(transparent)]
    Backend(#[from] BackendFailure),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSection {
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    #[default]
    Hashing,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderSection {
    pub kind: EncoderKind,
    pub dimension: usize,
    pub endpoint: Option<Endpoint>,
}

impl Default for EncoderSection {
    fn default() -> Self {
        Self {
            kind: EncoderKind::Hashing,
            dimension: REFERENCE_DIMENSION,
            endpoint: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NavigatorKind {
    #[default]
    Heuristic,
    Scripted,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NavigatorSection {
    pub kind: NavigatorKind,
    pub per_channel_limit: usize,
    pub seed_count: usize,
    pub expansion_depth: u32,
    /// JSON file with a scripted plan and reflections.
    pub script: Option<PathBuf>,
    pub endpoint: Option<Endpoint>,
}

impl Default for NavigatorSection {
    fn default() -> Self {
        let h = HeuristicNavigator::default();
        Self {
            kind: NavigatorKind::Heuristic,
            per_channel_limit: h.per_channel_limit,
            seed_count: h.seed_count,
            expansion_depth: h.expansion_depth,
            script: None,
            endpoint: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScorerKind {
    #[default]
    Keyword,
    Remote,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScorerSection {
    pub kind: ScorerKind,
    pub endpoint: Option<Endpoint>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ListwiseKind {
    #[default]
    Identity,
    Remote,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ListwiseSection {
    pub kind: ListwiseKind,
    pub endpoint: Option<Endpoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateEntry {
    pub input_usd_per_mtok: f64,
    pub output_usd_per_mtok: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub corpus: CorpusSection,
    pub engine: EngineConfig,
    pub encoder: EncoderSection,
    pub navigator: NavigatorSection,
    pub scorer: ScorerSection,
    pub listwise: ListwiseSection,
    pub rates: BTreeMap<String, RateEntry>,
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: PathBuf::from("<inline>"),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        toml::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    /// Apply `LITSEARCH_*` overrides from the given variables.
    pub fn apply_env<I, K, V>(&mut self, vars: I)
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: Into<String>,
    {
        for (key, value) in vars {
            let Some(key) = key.as_ref().strip_prefix(ENV_PREFIX) else {
                continue;
            };
            let value = value.into();
            if key == "CORPUS" {
                self.corpus.path = Some(PathBuf::from(value));
                continue;
            }
            let Some((role, field)) = key.split_once('_') else {
                continue;
            };
            let slot = match role {
                "ENCODER" => &mut self.encoder.endpoint,
                "NAVIGATOR" => &mut self.navigator.endpoint,
                "SCORER" => &mut self.scorer.endpoint,
                "LISTWISE" => &mut self.listwise.endpoint,
                _ => continue,
            };
            let ep = slot.get_or_insert_with(|| Endpoint::new("", ""));
            match field {
                "URL" => ep.url = value,
                "MODEL" => ep.model = value,
                "API_KEY" => ep.api_key = Some(value),
                _ => {}
            }
        }
    }

    pub fn apply_process_env(&mut self) {
        self.apply_env(std::env::vars());
    }

    pub fn rate_table(&self) -> Result<RateTable, ConfigError> {
        self.rates
            .iter()
            .map(|(model, r)| Ok((model.clone(), Rate::from_usd(r.input_usd_per_mtok, r.output_usd_per_mtok)?)))
            .collect()
    }

    pub fn build_encoder(&self) -> Result<Arc<dyn EncoderBackend>, ConfigError> {
        if self.encoder.dimension == 0 {
            return Err(ConfigError::Invalid("encoder.dimension must be positive".into()));
        }
        Ok(match self.encoder.kind {
            EncoderKind::Hashing => Arc::new(HashingEncoder::new(self.encoder.dimension)),
            EncoderKind::Remote => Arc::new(RemoteEncoder::new(
                endpoint("encoder", &self.encoder.endpoint)?,
                self.encoder.dimension,
            )?),
        })
    }

    pub fn build_navigator(&self) -> Result<Arc<dyn NavigatorBackend>, ConfigError> {
        let n = &self.navigator;
        Ok(match n.kind {
            NavigatorKind::Heuristic => Arc::new(HeuristicNavigator {
                per_channel_limit: n.per_channel_limit,
                seed_count: n.seed_count,
                expansion_depth: n.expansion_depth,
            }),
            NavigatorKind::Scripted => {
                let path = n
                    .script
                    .as_ref()
                    .ok_or_else(|| ConfigError::Invalid("navigator.kind = \"scripted\" needs navigator.script".into()))?;
                let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
                    path: path.clone(),
                    source,
                })?;
                let script: ScriptedNavigator = serde_json::from_str(&text).map_err(|e| ConfigError::Parse {
                    path: path.clone(),
                    message: e.to_string(),
                })?;
                Arc::new(script)
            }
            NavigatorKind::Remote => Arc::new(RemoteNavigator::new(endpoint("navigator", &n.endpoint)?)?),
        })
    }

    pub fn build_scorer(&self) -> Result<Arc<dyn ScorerBackend>, ConfigError> {
        Ok(match self.scorer.kind {
            ScorerKind::Keyword => Arc::new(KeywordOverlapScorer),
            ScorerKind::Remote => Arc::new(RemoteScorer::new(endpoint("scorer", &self.scorer.endpoint)?)?),
        })
    }

    pub fn build_listwise(&self) -> Result<Arc<dyn ListwiseBackend>, ConfigError> {
        Ok(match self.listwise.kind {
            ListwiseKind::Identity => Arc::new(IdentityListwise),
            ListwiseKind::Remote => Arc::new(RemoteListwise::new(endpoint("listwise", &self.listwise.endpoint)?)?),
        })
    }

    pub fn build_backends(&self) -> Result<Backends, ConfigError> {
        Ok(Backends::new(self.build_encoder()?, self.build_navigator()?, self.build_scorer()?)
            .with_listwise(self.build_listwise()?))
    }
}

fn endpoint(role: &str, ep: &Option<Endpoint>) -> Result<Endpoint, ConfigError> {
    match ep {
        Some(ep) if !ep.url.is_empty() => Ok(ep.clone()),
        _ => Err(ConfigError::Invalid(format!(
            "{role}.kind = \"remote\" needs {role}.endpoint.url or {ENV_PREFIX}{}_URL",
            role.to_uppercase()
        ))),
    }
}
