// SPDX-License-Identifier: Apache-2.0

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::corpus::ShardOrder;
use crate::embed::{Embedder, HashingEmbedder, RemoteEmbedder, RemoteEmbedderConfig};
use crate::error::{Error, Result};
use crate::generate::GeneratorSpec;
use crate::index::{GraphParams, IndexKind};
use crate::retrieve::RetrievalParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Concurrency {
    pub search: usize,
    pub embed: usize,
    pub generate: usize,
}

impl Default for Concurrency {
    fn default() -> Self {
        Self {
            search: 8,
            embed: 4,
            generate: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbedderKind {
    Hashing,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbedderConfig {
    pub kind: EmbedderKind,
    pub dims: usize,
    /// Hash seed for the hashing embedder.
    pub seed: u64,
    /// Served model name for the remote embedder.
    pub model: String,
    /// Overrides `RAGSCALE_EMBED_ENDPOINT`.
    pub endpoint: Option<String>,
    pub batch_size: usize,
    pub query_prefix: String,
    pub passage_prefix: String,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        Self {
            kind: EmbedderKind::Hashing,
            dims: 256,
            seed: 0,
            model: String::new(),
            endpoint: None,
            batch_size: 64,
            query_prefix: String::new(),
            passage_prefix: String::new(),
        }
    }
}

impl EmbedderConfig {
    pub fn build(&self, max_in_flight: usize) -> Result<Arc<dyn Embedder>> {
        Ok(match self.kind {
            EmbedderKind::Hashing => Arc::new(
                HashingEmbedder::new(self.dims, self.seed)
                    .with_prefixes(&self.query_prefix, &self.passage_prefix),
            ),
            EmbedderKind::Remote => {
                let mut cfg = match &self.endpoint {
                    Some(e) => {
                        let mut cfg = RemoteEmbedderConfig::new(e, &self.model, self.dims);
                        cfg.token = std::env::var(crate::embed::EMBED_TOKEN_ENV).ok();
                        cfg
                    }
                    None => RemoteEmbedderConfig::from_env(&self.model, self.dims)?,
                };
                cfg.batch_size = self.batch_size;
                cfg.max_in_flight = max_in_flight;
                cfg.query_prefix = self.query_prefix.clone();
                cfg.passage_prefix = self.passage_prefix.clone();
                Arc::new(RemoteEmbedder::new(cfg)?)
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct IndexConfig {
    pub kind: IndexKind,
    pub m: usize,
    pub ef_construction: usize,
    pub ef_search: usize,
    pub seed: u64,
}

impl Default for IndexConfig {
    fn default() -> Self {
        let g = GraphParams::default();
        Self {
            kind: IndexKind::Exact,
            m: g.m,
            ef_construction: g.ef_construction,
            ef_search: g.ef_search,
            seed: g.seed,
        }
    }
}

impl IndexConfig {
    pub fn graph_params(&self) -> GraphParams {
        GraphParams {
            m: self.m,
            ef_construction: self.ef_construction,
            ef_search: self.ef_search,
            seed: self.seed,
        }
    }
}

/// Optional random subsample of the QA file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sampling {
    pub size: usize,
    pub seed: u64,
}

/// Experiment configuration, read from TOML. Relative paths resolve against
/// the directory holding the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub run_id: String,
    pub dataset: String,
    /// Directory holding `documents.jsonl`.
    pub corpus_dir: PathBuf,
    pub qa_path: PathBuf,
    pub shard_plan: PathBuf,
    pub index_dir: PathBuf,
    pub run_dir: PathBuf,
    /// Defaults to `0..=N`.
    #[serde(default)]
    pub scales: Option<Vec<usize>>,
    #[serde(default)]
    pub order: ShardOrder,
    #[serde(default)]
    pub sampling: Option<Sampling>,
    #[serde(default)]
    pub retrieval: RetrievalParams,
    #[serde(default)]
    pub index: IndexConfig,
    #[serde(default)]
    pub embedder: EmbedderConfig,
    #[serde(default)]
    pub concurrency: Concurrency,
    pub models: Vec<GeneratorSpec>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for p in [
            &mut cfg.corpus_dir,
            &mut cfg.qa_path,
            &mut cfg.shard_plan,
            &mut cfg.index_dir,
            &mut cfg.run_dir,
        ] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|_| Error::Missing {
            what: "config file",
            name: path.display().to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() {
            return Err(Error::Config("at least one model is required".into()));
        }
        let mut ids: Vec<&str> = self.models.iter().map(|m| m.model_id.as_str()).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Conflict {
                what: "model_id",
                key: w[0].to_owned(),
            });
        }
        let decoding = self.models[0].decoding;
        if self.models.iter().any(|m| m.decoding != decoding) {
            return Err(Error::Config(
                "decoding parameters must be identical across models".into(),
            ));
        }
        if self.retrieval.k == 0 || self.retrieval.m == 0 {
            return Err(Error::Config("retrieval k and m must be positive".into()));
        }
        self.retrieval.chunking().validate()?;
        let c = self.concurrency;
        if c.search == 0 || c.embed == 0 || c.generate == 0 {
            return Err(Error::Config("concurrency limits must be positive".into()));
        }
        Ok(())
    }

    /// Model ids in declared order; adjacent pairs form the catch-up ladder.
    pub fn tiers(&self) -> Vec<String> {
        self.models.iter().map(|m| m.model_id.clone()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
run_id = "r"
dataset = "toy"
corpus_dir = "corpus"
qa_path = "qa.jsonl"
shard_plan = "plan.json"
index_dir = "idx"
run_dir = "/abs/run"

[[models]]
model_id = "oracle"
kind = "oracle"
"#;

    #[test]
    fn defaults_and_path_resolution() {
        let cfg = ExperimentConfig::from_toml(MINIMAL, Path::new("/base")).unwrap();
        assert_eq!(cfg.corpus_dir, PathBuf::from("/base/corpus"));
        assert_eq!(cfg.run_dir, PathBuf::from("/abs/run"));
        assert_eq!(cfg.retrieval, RetrievalParams::default());
        assert_eq!(
            cfg.concurrency,
            Concurrency {
                search: 8,
                embed: 4,
                generate: 4
            }
        );
        assert_eq!(cfg.order, ShardOrder::Forward);
        assert_eq!(cfg.embedder.dims, 256);
        assert!(cfg.scales.is_none());
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = ExperimentConfig::from_toml(MINIMAL, Path::new("/base")).unwrap();
        let back = ExperimentConfig::from_toml(&cfg.to_toml().unwrap(), Path::new("/elsewhere")).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn rejects_duplicates_and_bad_chunking() {
        let dup = format!("{MINIMAL}\n[[models]]\nmodel_id = \"oracle\"\nkind = \"oracle\"\n");
        assert!(matches!(
            ExperimentConfig::from_toml(&dup, Path::new("/")),
            Err(Error::Conflict { .. })
        ));
        let bad = MINIMAL.replace(
            "[[models]]",
            "[retrieval]\nchunk_tokens = 4\noverlap_tokens = 4\n\n[[models]]",
        );
        assert!(matches!(
            ExperimentConfig::from_toml(&bad, Path::new("/")),
            Err(Error::Config(_))
        ));
        let unknown = MINIMAL.replace("kind = \"oracle\"", "kind = \"local\"");
        assert!(ExperimentConfig::from_toml(&unknown, Path::new("/")).is_err());
    }
}
