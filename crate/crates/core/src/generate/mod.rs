// SPDX-License-Identifier: Apache-2.0

//! Answer generation from a question and its evidence bundle.

mod remote;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::corpus::{QAItem, ShardOrder};
use crate::digest::sha256_hex;
use crate::error::{Error, Result};
use crate::metrics::find_alias;
use crate::retrieve::EvidenceBundle;

pub use remote::{RemoteGenerator, RemoteGeneratorConfig, GENERATOR_ENDPOINT_ENV, GENERATOR_TOKEN_ENV};

pub const PROMPT_HEADER: &str = "Answer the question. Use the context passages if they are relevant. \
Reply with a short answer of a few words on a single line, with no explanation.";

/// Digest of the fixed prompt template; changes whenever the template does.
pub fn prompt_template_digest() -> String {
    let skeleton = render_parts("{question}", "{context}");
    sha256_hex(format!("{}\n{}", skeleton.system, skeleton.user))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompt {
    pub system: String,
    pub user: String,
}

impl Prompt {
    pub fn text(&self) -> String {
        format!("{}\n\n{}", self.system, self.user)
    }
}

fn render_parts(question: &str, context: &str) -> Prompt {
    let mut user = String::new();
    if !context.is_empty() {
        user.push_str("Context:\n");
        user.push_str(context);
        user.push('\n');
    }
    user.push_str("Question: ");
    user.push_str(question.trim());
    user.push_str("\nAnswer:");
    Prompt {
        system: PROMPT_HEADER.to_owned(),
        user,
    }
}

/// Fixed template: header, context section (omitted for closed-book), question, answer cue.
pub fn render_prompt(question: &str, bundle: &EvidenceBundle) -> Prompt {
    render_parts(question, &bundle.rendered_context)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeneratorKind {
    Remote,
    Oracle,
}

impl fmt::Display for GeneratorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GeneratorKind::Remote => "remote",
            GeneratorKind::Oracle => "oracle",
        })
    }
}

impl FromStr for GeneratorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "remote" => Ok(GeneratorKind::Remote),
            "oracle" => Ok(GeneratorKind::Oracle),
            other => Err(Error::Config(format!("unknown generator kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodingParams {
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for DecodingParams {
    fn default() -> Self {
        Self {
            temperature: 0.0,
            max_tokens: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    /// Tier label, e.g. `"4B"`.
    pub model_id: String,
    pub kind: GeneratorKind,
    /// Served model name; defaults to `model_id`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_name: Option<String>,
    /// Endpoint override; otherwise read from the environment.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default)]
    pub decoding: DecodingParams,
}

impl GeneratorSpec {
    pub fn oracle(model_id: impl Into<String>) -> Self {
        Self {
            model_id: model_id.into(),
            kind: GeneratorKind::Oracle,
            model_name: None,
            endpoint: None,
            decoding: DecodingParams::default(),
        }
    }

    pub fn remote(model_id: impl Into<String>, model_name: impl Into<String>) -> Self {
        Self {
            model_id: model_id.into(),
            kind: GeneratorKind::Remote,
            model_name: Some(model_name.into()),
            endpoint: None,
            decoding: DecodingParams::default(),
        }
    }
}

/// Raw output of one generator call.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    pub raw_request: String,
    pub raw_response: String,
}

pub trait Generator: Send + Sync {
    fn model_id(&self) -> &str;
    fn complete(&self, qa: &QAItem, bundle: &EvidenceBundle) -> Result<Completion>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub query_id: String,
    pub model_id: String,
    pub n: usize,
    pub order: ShardOrder,
    pub prediction: String,
    pub abstained: bool,
    pub latency_ms: u64,
    pub raw_response: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub raw_request: String,
    /// Empty for closed-book records.
    pub bundle_digest: String,
    /// Digest of the run manifest this record belongs to.
    pub run_digest: String,
}

impl GenerationRecord {
    pub fn key(&self) -> (&str, &str, usize, ShardOrder) {
        (&self.query_id, &self.model_id, self.n, self.order)
    }
}

/// Trims and keeps the first non-empty line.
pub fn extract_answer(text: &str) -> String {
    text.trim().lines().next().unwrap_or("").trim().to_owned()
}

/// Runs `generator` and post-processes its completion into a record.
pub fn generate<G: Generator + ?Sized>(
    generator: &G,
    qa: &QAItem,
    bundle: &EvidenceBundle,
    run_digest: &str,
) -> Result<GenerationRecord> {
    if bundle.query_id != qa.query_id {
        return Err(Error::Contract(format!(
            "bundle for `{}` passed with question `{}`",
            bundle.query_id, qa.query_id
        )));
    }
    let started = Instant::now();
    let completion = generator.complete(qa, bundle)?;
    let latency_ms = u64::try_from(started.elapsed().as_millis()).unwrap_or(u64::MAX);
    let prediction = extract_answer(&completion.text);
    Ok(GenerationRecord {
        query_id: qa.query_id.clone(),
        model_id: generator.model_id().to_owned(),
        n: bundle.n,
        order: bundle.order,
        abstained: prediction.is_empty(),
        prediction,
        latency_ms,
        raw_response: completion.raw_response,
        raw_request: completion.raw_request,
        bundle_digest: bundle.digest(),
        run_digest: run_digest.to_owned(),
    })
}

/// First gold alias found scanning chunks in rank order; `None` abstains.
pub fn oracle_answer<'a>(qa: &'a QAItem, bundle: &EvidenceBundle) -> Option<&'a str> {
    bundle
        .chunks
        .iter()
        .find_map(|c| find_alias(&c.text, &qa.gold_answers))
}

/// Answers with a gold alias only when the evidence contains one.
pub struct OracleGenerator {
    model_id: String,
}

impl OracleGenerator {
    pub fn new(model_id: impl Into<String>) -> Self {
        Self {
            model_id: model_id.into(),
        }
    }
}

impl Generator for OracleGenerator {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn complete(&self, qa: &QAItem, bundle: &EvidenceBundle) -> Result<Completion> {
        let text = oracle_answer(qa, bundle).unwrap_or("").to_owned();
        Ok(Completion {
            raw_response: text.clone(),
            text,
            raw_request: String::new(),
        })
    }
}

/// Instantiates the generator described by `spec`; remote endpoints and
/// tokens fall back to the environment.
pub fn build_generator(spec: &GeneratorSpec) -> Result<Arc<dyn Generator>> {
    Ok(match spec.kind {
        GeneratorKind::Oracle => Arc::new(OracleGenerator::new(&spec.model_id)),
        GeneratorKind::Remote => {
            let model = spec.model_name.clone().unwrap_or_else(|| spec.model_id.clone());
            let mut cfg = match &spec.endpoint {
                Some(endpoint) => {
                    let mut cfg = RemoteGeneratorConfig::new(endpoint, model);
                    cfg.token = std::env::var(GENERATOR_TOKEN_ENV).ok();
                    cfg
                }
                None => RemoteGeneratorConfig::from_env(model)?,
            };
            cfg.decoding = spec.decoding;
            Arc::new(RemoteGenerator::new(&spec.model_id, cfg))
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::ActiveScale;
    use crate::retrieve::{assemble_evidence, Chunk};

    fn bundle(texts: &[&str]) -> EvidenceBundle {
        let chunks = texts
            .iter()
            .enumerate()
            .map(|(i, t)| Chunk {
                chunk_id: format!("d{i}#0"),
                doc_id: format!("d{i}"),
                text: (*t).into(),
                token_span: (0, 1),
                rerank_score: Some(1.0 - i as f32 / 10.0),
            })
            .collect();
        let n = usize::from(!texts.is_empty());
        assemble_evidence("q", ActiveScale::forward(n), chunks, 8)
    }

    #[test]
    fn closed_book_prompt_has_no_context() {
        let p = render_prompt("who?", &bundle(&[])).text();
        assert!(!p.contains("Context:"));
        assert!(p.ends_with("Question: who?\nAnswer:"));
        assert!(p.starts_with(PROMPT_HEADER));
    }

    #[test]
    fn prompt_is_deterministic_and_counts_markers() {
        let texts: Vec<String> = (0..8).map(|i| format!("passage {i}")).collect();
        let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
        let b = bundle(&refs);
        let a = render_prompt("q?", &b).text();
        assert_eq!(a, render_prompt("q?", &b).text());
        let positions: Vec<usize> = (1..=8).map(|i| a.find(&format!("[{i}] ")).unwrap()).collect();
        assert!(positions.windows(2).all(|w| w[0] < w[1]));
        assert!(!a.contains("[9]"));
        assert_eq!(a.matches("\n[").count(), 8);
    }

    #[test]
    fn template_digest_is_stable() {
        assert_eq!(prompt_template_digest(), prompt_template_digest());
        assert_eq!(prompt_template_digest().len(), 64);
    }

    #[test]
    fn oracle_cases() {
        let qa = QAItem::new("q", "slogan?", ["Sprite"]);
        let b = bundle(&["Obey Your Thirst. Ever heard that catchy slogan for Sprite?"]);
        let r = generate(&OracleGenerator::new("oracle"), &qa, &b, "run").unwrap();
        assert_eq!((r.prediction.as_str(), r.abstained), ("Sprite", false));
        assert_eq!(r.bundle_digest, b.digest());

        let r = generate(&OracleGenerator::new("oracle"), &qa, &bundle(&[]), "run").unwrap();
        assert!(r.abstained && r.prediction.is_empty() && r.bundle_digest.is_empty());

        let qa = QAItem::new("q", "?", ["Sprite", "sprite soda"]);
        assert_eq!(oracle_answer(&qa, &bundle(&["we drank Sprite-soda"])), None);
        let qa = QAItem::new("q", "?", ["Sprite cola", "sprite soda"]);
        assert_eq!(
            oracle_answer(&qa, &bundle(&["we drank sprite soda"])),
            Some("sprite soda")
        );
    }

    #[test]
    fn oracle_scans_chunks_in_rank_order() {
        let qa = QAItem::new("q", "?", ["alpha", "beta"]);
        assert_eq!(
            oracle_answer(&qa, &bundle(&["has beta", "has alpha"])),
            Some("beta")
        );
    }

    #[test]
    fn first_line_extraction() {
        assert_eq!(extract_answer("Sprite\nbecause it is a soda"), "Sprite");
        assert_eq!(extract_answer("  \n  Sprite  \nmore"), "Sprite");
        assert_eq!(extract_answer("   "), "");
    }

    #[test]
    fn mismatched_bundle_is_contract_error() {
        let qa = QAItem::new("other", "?", ["x"]);
        assert!(matches!(
            generate(&OracleGenerator::new("o"), &qa, &bundle(&[]), ""),
            Err(Error::Contract(_))
        ));
    }
}
