// SPDX-License-Identifier: Apache-2.0

//! Build exact and graph indices over one shard and compare their answers.

use ragscale::corpus::partition;
use ragscale::embed::{embed_texts, HashingEmbedder, TextRole};
use ragscale::index::{build_index, GraphParams, IndexKind};
use ragscale::synthetic::{generate, SyntheticConfig};

fn main() -> ragscale::Result<()> {
    let data = generate(&SyntheticConfig {
        documents: 2000,
        questions: 5,
        ..Default::default()
    })?;
    let plan = partition(&data.corpus, 1, 0)?;
    let embedder = HashingEmbedder::new(256, 0);
    let exact = build_index(
        &plan,
        1,
        &data.corpus,
        &embedder,
        IndexKind::Exact,
        GraphParams::default(),
    )?;
    let graph = build_index(
        &plan,
        1,
        &data.corpus,
        &embedder,
        IndexKind::Approximate,
        GraphParams::default(),
    )?;

    for qa in &data.qa {
        let q = embed_texts(&embedder, &[qa.question.as_str()], TextRole::Query)?.remove(0);
        let a = exact.search(&q, 5)?;
        let b = graph.search(&q, 5)?;
        let overlap = b
            .iter()
            .filter(|d| a.iter().any(|e| e.doc_id == d.doc_id))
            .count();
        println!(
            "{}  top {} ({:.3})  graph overlap {overlap}/5",
            qa.question, a[0].doc_id, a[0].score
        );
        println!("   planted in {}", data.answer_docs[&qa.query_id]);
    }
    Ok(())
}
