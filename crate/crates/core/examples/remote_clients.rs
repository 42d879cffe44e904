// SPDX-License-Identifier: Apache-2.0

//! Calls an OpenAI-compatible embedding and chat service.
//!
//! Reads RAGSCALE_EMBED_ENDPOINT / RAGSCALE_EMBED_TOKEN and
//! RAGSCALE_GENERATOR_ENDPOINT / RAGSCALE_GENERATOR_TOKEN; model names come
//! from RAGSCALE_EMBED_MODEL (default `text-embedding-3-small`, 1536 dims)
//! and RAGSCALE_GENERATOR_MODEL.

use ragscale::corpus::{ActiveScale, QAItem};
use ragscale::embed::{embed_texts, RemoteEmbedder, RemoteEmbedderConfig, TextRole, EMBED_ENDPOINT_ENV};
use ragscale::generate::{generate, RemoteGenerator, RemoteGeneratorConfig, GENERATOR_ENDPOINT_ENV};
use ragscale::retrieve::{assemble_evidence, Chunk};

fn env_or(name: &str, default: &str) -> String {
    std::env::var(name).unwrap_or_else(|_| default.to_string())
}

fn main() -> ragscale::Result<()> {
    let qa = QAItem::new(
        "q1",
        "Which soft drink used the slogan Obey Your Thirst?",
        ["Sprite"],
    );
    let passage = "Obey Your Thirst was the long-running slogan of Sprite, a lemon-lime soda.";

    if std::env::var_os(EMBED_ENDPOINT_ENV).is_some() {
        let model = env_or("RAGSCALE_EMBED_MODEL", "text-embedding-3-small");
        let dims = env_or("RAGSCALE_EMBED_DIMS", "1536").parse().unwrap_or(1536);
        let embedder = RemoteEmbedder::new(RemoteEmbedderConfig::from_env(model, dims)?)?;
        let q = embed_texts(&embedder, &[qa.question.as_str()], TextRole::Query)?.remove(0);
        let p = embed_texts(&embedder, &[passage], TextRole::Passage)?.remove(0);
        println!("cosine(question, passage) = {:.4}", q.dot(&p));
    } else {
        println!("{EMBED_ENDPOINT_ENV} not set; skipping embeddings");
    }

    if std::env::var_os(GENERATOR_ENDPOINT_ENV).is_some() {
        let model = env_or("RAGSCALE_GENERATOR_MODEL", "qwen3-4b");
        let generator = RemoteGenerator::new("demo", RemoteGeneratorConfig::from_env(model)?);
        let chunk = Chunk {
            chunk_id: "slogan#0".into(),
            doc_id: "slogan".into(),
            text: passage.into(),
            token_span: (0, 12),
            rerank_score: None,
        };
        let bundle = assemble_evidence(&qa.query_id, ActiveScale::forward(1), vec![chunk], 8);
        let record = generate(&generator, &qa, &bundle, "demo")?;
        println!("prediction {:?} ({} ms)", record.prediction, record.latency_ms);
    } else {
        println!("{GENERATOR_ENDPOINT_ENV} not set; skipping generation");
    }
    Ok(())
}
