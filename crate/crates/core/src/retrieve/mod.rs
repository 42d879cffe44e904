// SPDX-License-Identifier: Apache-2.0

//! Scale-parameterized retrieval: fan a query out to the active shards, merge
//! the per-shard top-k, chunk the winning documents, rerank the chunks and
//! keep the top `m` as the evidence bundle.

mod chunk;
mod rerank;

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{active_shards, ActiveScale, Corpus, Document, QAItem, ShardOrder, ShardPlan};
use crate::digest::sha256_hex;
use crate::embed::{embed_texts, Embedder, TextRole};
use crate::error::{Error, Result};
use crate::index::{rank_order, ScoredDoc, ShardIndex};

pub use chunk::{chunk_documents, token_spans, Chunk, ChunkParams};
pub use rerank::{rerank, EmbeddingReranker, Reranker};

/// Retrieval hyper-parameters; held constant across corpus scales.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrievalParams {
    /// Documents kept after merging shard results.
    pub k: usize,
    /// Chunks passed to the generator.
    pub m: usize,
    pub chunk_tokens: usize,
    pub overlap_tokens: usize,
}

impl Default for RetrievalParams {
    fn default() -> Self {
        Self {
            k: 10,
            m: 8,
            chunk_tokens: 256,
            overlap_tokens: 64,
        }
    }
}

impl RetrievalParams {
    pub fn chunking(&self) -> ChunkParams {
        ChunkParams {
            chunk_tokens: self.chunk_tokens,
            overlap_tokens: self.overlap_tokens,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceBundle {
    pub query_id: String,
    pub n: usize,
    pub order: ShardOrder,
    pub chunks: Vec<Chunk>,
    pub rendered_context: String,
}

impl EvidenceBundle {
    pub fn closed_book(query_id: impl Into<String>, order: ShardOrder) -> Self {
        Self {
            query_id: query_id.into(),
            n: 0,
            order,
            chunks: Vec::new(),
            rendered_context: String::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    /// Content hash of the bundle; empty for closed-book bundles.
    pub fn digest(&self) -> String {
        if self.n == 0 {
            return String::new();
        }
        sha256_hex(serde_json::to_vec(self).expect("bundle serializes"))
    }
}

/// Renders ranked chunks as `"[i] text\n"` blocks separated by a blank line.
pub fn render_context(chunks: &[Chunk]) -> String {
    chunks
        .iter()
        .enumerate()
        .map(|(i, c)| format!("[{}] {}\n", i + 1, c.text))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn assemble_evidence(
    query_id: &str,
    scale: ActiveScale,
    ranked_chunks: Vec<Chunk>,
    m: usize,
) -> EvidenceBundle {
    if scale.is_closed_book() {
        return EvidenceBundle::closed_book(query_id, scale.order);
    }
    let mut chunks = ranked_chunks;
    chunks.truncate(m);
    let rendered_context = render_context(&chunks);
    EvidenceBundle {
        query_id: query_id.to_owned(),
        n: scale.n,
        order: scale.order,
        chunks,
        rendered_context,
    }
}

/// Merges per-shard ranked lists into a global top-`k`. The result does not
/// depend on the order of `lists`.
pub fn merge_topk(lists: Vec<Vec<ScoredDoc>>, k: usize) -> Vec<ScoredDoc> {
    let mut all: Vec<ScoredDoc> = lists.into_iter().flatten().collect();
    all.sort_by(rank_order);
    all.truncate(k);
    all
}

/// Global top-`k` over the union of active shards.
#[allow(clippy::too_many_arguments)]
pub fn retrieve_topk<E: Embedder + ?Sized>(
    plan: &ShardPlan,
    scale: ActiveScale,
    indices: &BTreeMap<usize, ShardIndex>,
    query: &QAItem,
    embedder: &E,
    k: usize,
    pool: Option<&rayon::ThreadPool>,
) -> Result<Vec<ScoredDoc>> {
    if scale.is_closed_book() {
        return Err(Error::Contract(
            "retrieval at n = 0; use the closed-book path".into(),
        ));
    }
    if k == 0 {
        return Err(Error::Contract("k must be at least 1".into()));
    }
    let shards = active_shards(plan, scale)?;
    let active: Vec<&ShardIndex> = shards
        .iter()
        .map(|s| {
            indices.get(s).ok_or_else(|| Error::Missing {
                what: "shard index",
                name: format!("shard {s}"),
            })
        })
        .collect::<Result<_>>()?;
    let q = embed_texts(embedder, &[query.question.as_str()], TextRole::Query)?
        .pop()
        .expect("one vector");
    let search =
        || -> Result<Vec<Vec<ScoredDoc>>> { active.par_iter().map(|idx| idx.search(&q, k)).collect() };
    let lists = match pool {
        Some(pool) => pool.install(search)?,
        None => search()?,
    };
    Ok(merge_topk(lists, k))
}

/// Complete retrieval pipeline bound to one corpus, plan and index set.
pub struct Retriever {
    plan: Arc<ShardPlan>,
    corpus: Arc<Corpus>,
    indices: Arc<BTreeMap<usize, ShardIndex>>,
    embedder: Arc<dyn Embedder>,
    reranker: Arc<dyn Reranker>,
    params: RetrievalParams,
    pool: Option<Arc<rayon::ThreadPool>>,
}

impl Retriever {
    pub fn new(
        plan: Arc<ShardPlan>,
        corpus: Arc<Corpus>,
        indices: Arc<BTreeMap<usize, ShardIndex>>,
        embedder: Arc<dyn Embedder>,
        params: RetrievalParams,
    ) -> Result<Self> {
        params.chunking().validate()?;
        for idx in indices.values() {
            idx.verify_against(&plan)?;
            if idx.dims() != embedder.dims() {
                return Err(Error::Integrity(format!(
                    "shard {} index has {} dims, embedder produces {}",
                    idx.shard_index(),
                    idx.dims(),
                    embedder.dims()
                )));
            }
        }
        let reranker = Arc::new(EmbeddingReranker::new(embedder.clone()));
        Ok(Self {
            plan,
            corpus,
            indices,
            embedder,
            reranker,
            params,
            pool: None,
        })
    }

    pub fn with_reranker(mut self, reranker: Arc<dyn Reranker>) -> Self {
        self.reranker = reranker;
        self
    }

    /// Bounds concurrent shard searches to `threads`.
    pub fn with_search_concurrency(mut self, threads: usize) -> Result<Self> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .build()
            .map_err(|e| Error::Config(format!("search pool: {e}")))?;
        self.pool = Some(Arc::new(pool));
        Ok(self)
    }

    pub fn params(&self) -> RetrievalParams {
        self.params
    }

    pub fn plan(&self) -> &ShardPlan {
        &self.plan
    }

    pub fn topk(&self, query: &QAItem, scale: ActiveScale) -> Result<Vec<ScoredDoc>> {
        retrieve_topk(
            &self.plan,
            scale,
            &self.indices,
            query,
            self.embedder.as_ref(),
            self.params.k,
            self.pool.as_deref(),
        )
    }

    pub fn evidence(&self, query: &QAItem, scale: ActiveScale) -> Result<EvidenceBundle> {
        if scale.is_closed_book() {
            return Ok(EvidenceBundle::closed_book(&query.query_id, scale.order));
        }
        let hits = self.topk(query, scale)?;
        let docs: Vec<&Document> = hits
            .iter()
            .map(|h| {
                self.corpus.get(&h.doc_id).ok_or_else(|| Error::Missing {
                    what: "document",
                    name: h.doc_id.clone(),
                })
            })
            .collect::<Result<_>>()?;
        let chunks = chunk_documents(&docs, self.params.chunking())?;
        let ranked = if chunks.is_empty() {
            chunks
        } else {
            rerank(query, chunks, self.reranker.as_ref())?
        };
        Ok(assemble_evidence(&query.query_id, scale, ranked, self.params.m))
    }
}
