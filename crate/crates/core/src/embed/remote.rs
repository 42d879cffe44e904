// SPDX-License-Identifier: Apache-2.0

use std::thread;
use std::time::Duration;

use serde_json::{json, Value};

use super::{Embedder, EmbeddingVector, TextRole};
use crate::error::{Error, Result};
use crate::http::{JsonClient, RetryPolicy, Semaphore};

pub const EMBED_ENDPOINT_ENV: &str = "RAGSCALE_EMBED_ENDPOINT";
pub const EMBED_TOKEN_ENV: &str = "RAGSCALE_EMBED_TOKEN";

#[derive(Debug, Clone)]
pub struct RemoteEmbedderConfig {
    /// Full URL of the embeddings endpoint.
    pub endpoint: String,
    pub model: String,
    pub token: Option<String>,
    pub dims: usize,
    pub batch_size: usize,
    pub max_in_flight: usize,
    pub retry: RetryPolicy,
    pub timeout: Duration,
    pub query_prefix: String,
    pub passage_prefix: String,
    /// Normalize returned vectors to unit length.
    pub normalize: bool,
}

impl RemoteEmbedderConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>, dims: usize) -> Self {
        Self {
            endpoint: endpoint.into(),
            model: model.into(),
            token: None,
            dims,
            batch_size: 64,
            max_in_flight: 4,
            retry: RetryPolicy::default(),
            timeout: Duration::from_secs(60),
            query_prefix: String::new(),
            passage_prefix: String::new(),
            normalize: true,
        }
    }

    /// Reads endpoint and token from `RAGSCALE_EMBED_ENDPOINT` / `RAGSCALE_EMBED_TOKEN`.
    pub fn from_env(model: impl Into<String>, dims: usize) -> Result<Self> {
        let endpoint = std::env::var(EMBED_ENDPOINT_ENV)
            .map_err(|_| Error::Config(format!("{EMBED_ENDPOINT_ENV} is not set")))?;
        let mut cfg = Self::new(endpoint, model, dims);
        cfg.token = std::env::var(EMBED_TOKEN_ENV).ok();
        Ok(cfg)
    }
}

/// Client for an embeddings service speaking the common
/// `{"model", "input": [..]} -> {"data": [{"index", "embedding"}]}` shape.
pub struct RemoteEmbedder {
    cfg: RemoteEmbedderConfig,
    client: JsonClient,
    in_flight: Semaphore,
}

impl RemoteEmbedder {
    pub fn new(cfg: RemoteEmbedderConfig) -> Result<Self> {
        if cfg.dims == 0 || cfg.batch_size == 0 {
            return Err(Error::Config(
                "remote embedder needs dims and batch_size > 0".into(),
            ));
        }
        Ok(Self {
            client: JsonClient::new(cfg.timeout, cfg.retry.clone()),
            in_flight: Semaphore::new(cfg.max_in_flight),
            cfg,
        })
    }

    fn embed_request(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        let _permit = self.in_flight.acquire();
        let payload = json!({ "model": self.cfg.model, "input": texts });
        let exchange = self
            .client
            .post(&self.cfg.endpoint, self.cfg.token.as_deref(), &payload)?;
        let rows = parse_embeddings(&exchange.body, texts.len())?;
        rows.into_iter()
            .enumerate()
            .map(|(i, row)| {
                if row.len() != self.cfg.dims {
                    return Err(Error::Integrity(format!(
                        "service returned {} dims for text {i}, expected {}",
                        row.len(),
                        self.cfg.dims
                    )));
                }
                let v = EmbeddingVector::new(row)?;
                if self.cfg.normalize {
                    v.normalized()
                } else {
                    Ok(v)
                }
            })
            .collect()
    }
}

fn parse_embeddings(body: &Value, expected: usize) -> Result<Vec<Vec<f32>>> {
    let bad = |why: &str| Error::Integrity(format!("malformed embedding response: {why}"));
    let to_row = |v: &Value| -> Result<Vec<f32>> {
        v.as_array()
            .ok_or_else(|| bad("embedding is not an array"))?
            .iter()
            .map(|x| {
                x.as_f64()
                    .map(|f| f as f32)
                    .ok_or_else(|| bad("non-numeric component"))
            })
            .collect()
    };
    let rows: Vec<Vec<f32>> = if let Some(data) = body.get("data").and_then(Value::as_array) {
        let mut indexed: Vec<(usize, Vec<f32>)> = data
            .iter()
            .enumerate()
            .map(|(pos, item)| {
                let idx = item
                    .get("index")
                    .and_then(Value::as_u64)
                    .map_or(pos, |i| i as usize);
                let emb = item.get("embedding").ok_or_else(|| bad("missing embedding"))?;
                Ok((idx, to_row(emb)?))
            })
            .collect::<Result<_>>()?;
        indexed.sort_by_key(|(i, _)| *i);
        indexed.into_iter().map(|(_, r)| r).collect()
    } else if let Some(list) = body.get("embeddings").and_then(Value::as_array) {
        list.iter().map(to_row).collect::<Result<_>>()?
    } else if let Some(list) = body.as_array() {
        list.iter().map(to_row).collect::<Result<_>>()?
    } else {
        return Err(bad("no `data` or `embeddings` field"));
    };
    if rows.len() != expected {
        return Err(Error::Integrity(format!(
            "service returned {} embeddings for {expected} texts",
            rows.len()
        )));
    }
    Ok(rows)
}

impl Embedder for RemoteEmbedder {
    fn dims(&self) -> usize {
        self.cfg.dims
    }

    fn unit_norm(&self) -> bool {
        self.cfg.normalize
    }

    fn fingerprint(&self) -> String {
        format!(
            "remote:model={},dims={},qp={:?},pp={:?},norm={}",
            self.cfg.model, self.cfg.dims, self.cfg.query_prefix, self.cfg.passage_prefix, self.cfg.normalize
        )
    }

    fn embed_batch(&self, texts: &[&str], role: TextRole) -> Result<Vec<EmbeddingVector>> {
        let prefix = match role {
            TextRole::Query => &self.cfg.query_prefix,
            TextRole::Passage => &self.cfg.passage_prefix,
        };
        let prefixed: Vec<String> = texts.iter().map(|t| format!("{prefix}{t}")).collect();
        let batches: Vec<&[String]> = prefixed.chunks(self.cfg.batch_size).collect();
        if batches.len() == 1 {
            return self.embed_request(batches[0]);
        }
        // The semaphore bounds how many of these are actually on the wire.
        let results: Vec<Result<Vec<EmbeddingVector>>> = thread::scope(|s| {
            let handles: Vec<_> = batches
                .iter()
                .map(|b| s.spawn(move || self.embed_request(b)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("embedding worker panicked"))
                .collect()
        });
        let mut out = Vec::with_capacity(texts.len());
        for r in results {
            out.extend(r?);
        }
        Ok(out)
    }
}
