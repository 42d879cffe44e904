// SPDX-License-Identifier: Apache-2.0

//! Evidence bundles for one question as the corpus grows shard by shard.

use std::collections::BTreeMap;
use std::sync::Arc;

use ragscale::corpus::{partition, ActiveScale};
use ragscale::embed::{Embedder, HashingEmbedder};
use ragscale::index::{build_index, GraphParams, IndexKind};
use ragscale::metrics::coverage_hit;
use ragscale::retrieve::{RetrievalParams, Retriever};
use ragscale::synthetic::{generate, SyntheticConfig};

fn main() -> ragscale::Result<()> {
    let data = generate(&SyntheticConfig {
        documents: 600,
        questions: 10,
        ..Default::default()
    })?;
    let plan = partition(&data.corpus, 6, 3)?;
    let embedder: Arc<dyn Embedder> = Arc::new(HashingEmbedder::new(256, 0));
    let mut indices = BTreeMap::new();
    for s in 1..=plan.num_shards() {
        let idx = build_index(
            &plan,
            s,
            &data.corpus,
            embedder.as_ref(),
            IndexKind::Exact,
            GraphParams::default(),
        )?;
        indices.insert(s, idx);
    }
    let retriever = Retriever::new(
        Arc::new(plan),
        Arc::new(data.corpus.clone()),
        Arc::new(indices),
        embedder,
        RetrievalParams::default(),
    )?;

    let qa = &data.qa[0];
    let home = retriever
        .plan()
        .shard_of(&data.answer_docs[&qa.query_id])
        .unwrap();
    println!(
        "{}  (answer {:?}, planted in shard {home})",
        qa.question, qa.gold_answers[0]
    );
    for n in 1..=6 {
        let bundle = retriever.evidence(qa, ActiveScale::forward(n))?;
        let top = &bundle.chunks[0];
        println!(
            "n={n}  chunks {}  covered {}  top {} ({:.3})",
            bundle.chunks.len(),
            coverage_hit(&bundle, &qa.gold_answers),
            top.chunk_id,
            top.rerank_score.unwrap_or(f32::NAN),
        );
    }
    Ok(())
}
