// SPDX-License-Identifier: Apache-2.0

//! One vector index per shard. `Exact` is a flat inner-product scan and is
//! the reference; `Approximate` searches an HNSW graph over the same vectors.

mod format;
mod hnsw;

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, ShardPlan};
use crate::embed::{dot, embed_texts, Embedder, EmbeddingVector, TextRole};
use crate::error::{Error, IoContext, Result};

use hnsw::Graph;
pub use hnsw::GraphParams;

/// Texts sent to the embedder per call while building.
const BUILD_BATCH: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IndexKind {
    #[default]
    Exact,
    Approximate,
}

impl fmt::Display for IndexKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IndexKind::Exact => "exact",
            IndexKind::Approximate => "approximate",
        })
    }
}

impl FromStr for IndexKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "exact" | "flat" => Ok(IndexKind::Exact),
            "approximate" | "ann" | "hnsw" => Ok(IndexKind::Approximate),
            other => Err(Error::Config(format!("unknown index kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredDoc {
    pub doc_id: String,
    pub score: f32,
    pub shard_index: usize,
}

/// Ranking order used everywhere: score descending, then doc_id ascending.
pub fn rank_order(a: &ScoredDoc, b: &ScoredDoc) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.doc_id.as_bytes().cmp(b.doc_id.as_bytes()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShardIndex {
    shard_index: usize,
    kind: IndexKind,
    dims: usize,
    /// Ascending byte order; row `i` of `vectors` belongs to `doc_ids[i]`.
    doc_ids: Vec<String>,
    vectors: Vec<f32>,
    build_params: BTreeMap<String, String>,
    graph: Option<Graph>,
}

pub fn build_index<E: Embedder + ?Sized>(
    plan: &ShardPlan,
    shard_index: usize,
    corpus: &Corpus,
    embedder: &E,
    kind: IndexKind,
    graph_params: GraphParams,
) -> Result<ShardIndex> {
    let mut ids: Vec<&str> = plan.members(shard_index)?.iter().map(String::as_str).collect();
    ids.sort_unstable();
    let mut texts = Vec::with_capacity(ids.len());
    for id in &ids {
        if id.contains('\0') {
            return Err(Error::Integrity(format!("doc_id {id:?} contains NUL")));
        }
        let doc = corpus.get(id).ok_or_else(|| {
            Error::Integrity(format!(
                "document `{id}` assigned to shard {shard_index} has no text"
            ))
        })?;
        texts.push(doc.text.as_str());
    }

    let dims = embedder.dims();
    let mut vectors = Vec::with_capacity(ids.len() * dims);
    for batch in texts.chunks(BUILD_BATCH) {
        for v in embed_texts(embedder, batch, TextRole::Passage)? {
            vectors.extend(v.normalized()?.into_values());
        }
    }

    let mut build_params = BTreeMap::new();
    build_params.insert("embedder".to_string(), embedder.fingerprint());
    let graph = match kind {
        IndexKind::Exact => None,
        IndexKind::Approximate => {
            build_params.insert("m".into(), graph_params.m.to_string());
            build_params.insert("ef_construction".into(), graph_params.ef_construction.to_string());
            build_params.insert("ef_search".into(), graph_params.ef_search.to_string());
            build_params.insert("seed".into(), graph_params.seed.to_string());
            Some(Graph::build(&vectors, dims, graph_params))
        }
    };

    Ok(ShardIndex {
        shard_index,
        kind,
        dims,
        doc_ids: ids.into_iter().map(str::to_owned).collect(),
        vectors,
        build_params,
        graph,
    })
}

impl ShardIndex {
    pub fn shard_index(&self) -> usize {
        self.shard_index
    }

    pub fn kind(&self) -> IndexKind {
        self.kind
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    pub fn build_params(&self) -> &BTreeMap<String, String> {
        &self.build_params
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    /// Stored (normalized) vectors in doc_id order.
    pub fn entries(&self) -> impl Iterator<Item = (&str, &[f32])> {
        self.doc_ids
            .iter()
            .map(String::as_str)
            .zip(self.vectors.chunks_exact(self.dims.max(1)))
    }

    fn scored(&self, row: usize, score: f32) -> ScoredDoc {
        ScoredDoc {
            doc_id: self.doc_ids[row].clone(),
            score,
            shard_index: self.shard_index,
        }
    }

    /// Top-`k` documents by cosine similarity to `query`.
    pub fn search(&self, query: &EmbeddingVector, k: usize) -> Result<Vec<ScoredDoc>> {
        let ef = self
            .build_params
            .get("ef_search")
            .and_then(|v| v.parse().ok())
            .unwrap_or(GraphParams::default().ef_search);
        self.search_with_ef(query, k, ef)
    }

    pub fn search_with_ef(&self, query: &EmbeddingVector, k: usize, ef: usize) -> Result<Vec<ScoredDoc>> {
        if k == 0 {
            return Err(Error::Contract("k must be at least 1".into()));
        }
        if query.dims() != self.dims {
            return Err(Error::Integrity(format!(
                "query has {} dims, shard {} index has {}",
                query.dims(),
                self.shard_index,
                self.dims
            )));
        }
        let q = query.clone().normalized()?;
        let q = q.values();
        let mut hits: Vec<(f32, usize)> = match &self.graph {
            None => self
                .vectors
                .chunks_exact(self.dims)
                .enumerate()
                .map(|(row, v)| (dot(q, v), row))
                .collect(),
            Some(graph) => graph
                .search(&self.vectors, self.dims, q, ef.max(k))
                .into_iter()
                .map(|(row, score)| (score, row as usize))
                .collect(),
        };
        let order = |a: &(f32, usize), b: &(f32, usize)| {
            b.0.total_cmp(&a.0)
                .then_with(|| self.doc_ids[a.1].as_bytes().cmp(self.doc_ids[b.1].as_bytes()))
        };
        if hits.len() > k {
            hits.select_nth_unstable_by(k - 1, order);
            hits.truncate(k);
        }
        hits.sort_by(order);
        Ok(hits
            .into_iter()
            .map(|(score, row)| self.scored(row, score))
            .collect())
    }

    /// Checks that the index holds exactly the plan's members for its shard.
    pub fn verify_against(&self, plan: &ShardPlan) -> Result<()> {
        let mut expected: Vec<&str> = plan
            .members(self.shard_index)?
            .iter()
            .map(String::as_str)
            .collect();
        expected.sort_unstable();
        if expected.len() != self.doc_ids.len() || expected.iter().zip(&self.doc_ids).any(|(a, b)| *a != b) {
            return Err(Error::Integrity(format!(
                "shard {} index does not match the shard plan",
                self.shard_index
            )));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        format::encode(self)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        format::decode(bytes)
    }
}

/// Directory of persisted indices, laid out as
/// `<root>/<plan digest prefix>/shard-<NNN>.<kind>.idx`.
#[derive(Debug, Clone)]
pub struct IndexStore {
    root: PathBuf,
}

impl IndexStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn plan_dir(&self, plan_digest: &str) -> PathBuf {
        self.root.join(&plan_digest[..plan_digest.len().min(16)])
    }

    pub fn path_for(&self, plan_digest: &str, shard_index: usize, kind: IndexKind) -> PathBuf {
        self.plan_dir(plan_digest)
            .join(format!("shard-{shard_index:03}.{kind}.idx"))
    }

    /// Persists `index`, refusing one whose dims disagree with siblings already stored.
    pub fn save(&self, plan_digest: &str, index: &ShardIndex) -> Result<PathBuf> {
        let dir = self.plan_dir(plan_digest);
        fs::create_dir_all(&dir).ctx(|| format!("creating {}", dir.display()))?;
        let own = self.path_for(plan_digest, index.shard_index, index.kind);
        for entry in fs::read_dir(&dir).ctx(|| format!("listing {}", dir.display()))? {
            let path = entry.ctx(|| format!("listing {}", dir.display()))?.path();
            if path == own || path.extension().is_none_or(|e| e != "idx") {
                continue;
            }
            let bytes = fs::read(&path).ctx(|| format!("reading {}", path.display()))?;
            let header = format::decode_header(&bytes)?;
            if header.dims != index.dims {
                return Err(Error::Integrity(format!(
                    "index dims {} disagree with sibling {} ({} dims)",
                    index.dims,
                    path.display(),
                    header.dims
                )));
            }
        }
        let tmp = own.with_extension("idx.tmp");
        fs::write(&tmp, index.to_bytes()).ctx(|| format!("writing {}", tmp.display()))?;
        fs::rename(&tmp, &own).ctx(|| format!("renaming {}", tmp.display()))?;
        Ok(own)
    }

    pub fn load(&self, plan_digest: &str, shard_index: usize, kind: IndexKind) -> Result<ShardIndex> {
        let path = self.path_for(plan_digest, shard_index, kind);
        let bytes = fs::read(&path).map_err(|_| Error::Missing {
            what: "shard index",
            name: path.display().to_string(),
        })?;
        let index = ShardIndex::from_bytes(&bytes)?;
        if index.shard_index != shard_index || index.kind != kind {
            return Err(Error::Integrity(format!(
                "{} holds shard {} ({}), not shard {shard_index} ({kind})",
                path.display(),
                index.shard_index,
                index.kind
            )));
        }
        Ok(index)
    }

    pub fn exists(&self, plan_digest: &str, shard_index: usize, kind: IndexKind) -> bool {
        self.path_for(plan_digest, shard_index, kind).is_file()
    }
}
