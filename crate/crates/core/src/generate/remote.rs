// SPDX-License-Identifier: Apache-2.0

use std::time::Duration;

use serde_json::{json, Value};

use super::{render_prompt, Completion, DecodingParams, Generator};
use crate::corpus::QAItem;
use crate::error::{Error, Result};
use crate::http::{JsonClient, RetryPolicy};
use crate::retrieve::EvidenceBundle;

pub const GENERATOR_ENDPOINT_ENV: &str = "RAGSCALE_GENERATOR_ENDPOINT";
pub const GENERATOR_TOKEN_ENV: &str = "RAGSCALE_GENERATOR_TOKEN";

#[derive(Debug, Clone)]
pub struct RemoteGeneratorConfig {
    /// Full URL of the chat completions endpoint.
    pub endpoint: String,
    pub model: String,
    pub token: Option<String>,
    pub decoding: DecodingParams,
    pub retry: RetryPolicy,
    pub timeout: Duration,
}

impl RemoteGeneratorConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            model: model.into(),
            token: None,
            decoding: DecodingParams::default(),
            retry: RetryPolicy::default(),
            timeout: Duration::from_secs(120),
        }
    }

    /// Reads endpoint and token from `RAGSCALE_GENERATOR_ENDPOINT` / `RAGSCALE_GENERATOR_TOKEN`.
    pub fn from_env(model: impl Into<String>) -> Result<Self> {
        let endpoint = std::env::var(GENERATOR_ENDPOINT_ENV)
            .map_err(|_| Error::Config(format!("{GENERATOR_ENDPOINT_ENV} is not set")))?;
        let mut cfg = Self::new(endpoint, model);
        cfg.token = std::env::var(GENERATOR_TOKEN_ENV).ok();
        Ok(cfg)
    }
}

/// Chat-completions client: one system and one user message, a single choice.
pub struct RemoteGenerator {
    model_id: String,
    cfg: RemoteGeneratorConfig,
    client: JsonClient,
}

impl RemoteGenerator {
    pub fn new(model_id: impl Into<String>, cfg: RemoteGeneratorConfig) -> Self {
        Self {
            model_id: model_id.into(),
            client: JsonClient::new(cfg.timeout, cfg.retry.clone()),
            cfg,
        }
    }
}

fn completion_text(body: &Value) -> Result<String> {
    let choice = body
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| Error::Transport {
            attempts: 1,
            message: "completion response has no choices".into(),
        })?;
    let text = choice.pointer("/message/content").or_else(|| choice.get("text"));
    Ok(match text {
        Some(Value::String(s)) => s.clone(),
        _ => String::new(),
    })
}

impl Generator for RemoteGenerator {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn complete(&self, qa: &QAItem, bundle: &EvidenceBundle) -> Result<Completion> {
        let prompt = render_prompt(&qa.question, bundle);
        let payload = json!({
            "model": self.cfg.model,
            "messages": [
                {"role": "system", "content": prompt.system},
                {"role": "user", "content": prompt.user},
            ],
            "temperature": self.cfg.decoding.temperature,
            "max_tokens": self.cfg.decoding.max_tokens,
            "n": 1,
        });
        let exchange = self
            .client
            .post(&self.cfg.endpoint, self.cfg.token.as_deref(), &payload)?;
        Ok(Completion {
            text: completion_text(&exchange.body)?,
            raw_request: exchange.request,
            raw_response: exchange.response,
        })
    }
}
