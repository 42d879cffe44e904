// SPDX-License-Identifier: Apache-2.0

use std::sync::Arc;

use super::Chunk;
use crate::corpus::QAItem;
use crate::embed::{embed_texts, Embedder, TextRole};
use crate::error::{Error, Result};

/// Scores chunks against a question; higher is more relevant.
pub trait Reranker: Send + Sync {
    fn score(&self, question: &str, chunks: &[Chunk]) -> Result<Vec<f32>>;
}

/// Cosine between the question and chunk embeddings of one embedder.
pub struct EmbeddingReranker {
    embedder: Arc<dyn Embedder>,
}

impl EmbeddingReranker {
    pub fn new(embedder: Arc<dyn Embedder>) -> Self {
        Self { embedder }
    }
}

impl Reranker for EmbeddingReranker {
    fn score(&self, question: &str, chunks: &[Chunk]) -> Result<Vec<f32>> {
        let q = embed_texts(self.embedder.as_ref(), &[question], TextRole::Query)?
            .pop()
            .expect("one vector")
            .normalized()?;
        let texts: Vec<&str> = chunks.iter().map(|c| c.text.as_str()).collect();
        embed_texts(self.embedder.as_ref(), &texts, TextRole::Passage)?
            .into_iter()
            .map(|v| Ok(q.dot(&v.normalized()?)))
            .collect()
    }
}

/// Sorts chunks by reranker score descending, ties by (doc_id, start).
pub fn rerank<R: Reranker + ?Sized>(query: &QAItem, chunks: Vec<Chunk>, reranker: &R) -> Result<Vec<Chunk>> {
    if chunks.is_empty() {
        return Err(Error::Contract("nothing to rerank".into()));
    }
    let scores = reranker.score(&query.question, &chunks)?;
    if scores.len() != chunks.len() {
        return Err(Error::Integrity(format!(
            "reranker returned {} scores for {} chunks",
            scores.len(),
            chunks.len()
        )));
    }
    let mut scored: Vec<Chunk> = chunks
        .into_iter()
        .zip(scores)
        .map(|(mut c, s)| {
            c.rerank_score = Some(s);
            c
        })
        .collect();
    scored.sort_by(|a, b| {
        let (sa, sb) = (
            a.rerank_score.unwrap_or(f32::MIN),
            b.rerank_score.unwrap_or(f32::MIN),
        );
        sb.total_cmp(&sa)
            .then_with(|| a.doc_id.as_bytes().cmp(b.doc_id.as_bytes()))
            .then_with(|| a.token_span.0.cmp(&b.token_span.0))
    });
    Ok(scored)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::{EmbeddingVector, HashingEmbedder};

    fn chunk(doc: &str, start: usize, text: &str) -> Chunk {
        Chunk {
            chunk_id: format!("{doc}#{start}"),
            doc_id: doc.into(),
            text: text.into(),
            token_span: (start, start + 1),
            rerank_score: None,
        }
    }

    fn qa(q: &str) -> QAItem {
        QAItem::new("q", q, ["x"])
    }

    /// 2-d embedder: question -> (1, 0); chunk texts name their angle in degrees.
    struct Angles;
    impl Embedder for Angles {
        fn dims(&self) -> usize {
            2
        }
        fn unit_norm(&self) -> bool {
            true
        }
        fn fingerprint(&self) -> String {
            "angles".into()
        }
        fn embed_batch(&self, texts: &[&str], role: TextRole) -> Result<Vec<EmbeddingVector>> {
            texts
                .iter()
                .map(|t| match role {
                    TextRole::Query => EmbeddingVector::new(vec![1.0, 0.0]),
                    TextRole::Passage => {
                        let deg: f32 = t.parse().unwrap();
                        let r = deg.to_radians();
                        EmbeddingVector::new(vec![r.cos(), r.sin()])
                    }
                })
                .collect()
        }
    }

    #[test]
    fn single_chunk_gets_its_cosine() {
        let r = EmbeddingReranker::new(Arc::new(Angles));
        let out = rerank(&qa("?"), vec![chunk("a", 0, "60")], &r).unwrap();
        assert!((out[0].rerank_score.unwrap() - 0.5).abs() < 1e-6);
    }

    #[test]
    fn hand_computed_order() {
        // cos(80) = 0.1736, cos(10) = 0.9848, cos(135) = -0.7071
        let r = EmbeddingReranker::new(Arc::new(Angles));
        let chunks = vec![chunk("a", 0, "80"), chunk("b", 0, "10"), chunk("c", 0, "135")];
        let out = rerank(&qa("?"), chunks, &r).unwrap();
        let ids: Vec<_> = out.iter().map(|c| c.doc_id.as_str()).collect();
        assert_eq!(ids, vec!["b", "a", "c"]);
        assert!((out[0].rerank_score.unwrap() - 0.984_807_7).abs() < 1e-5);
        assert!((out[2].rerank_score.unwrap() + std::f32::consts::FRAC_1_SQRT_2).abs() < 1e-5);
    }

    #[test]
    fn identical_text_tie_breaks_on_doc_id() {
        let r = EmbeddingReranker::new(Arc::new(HashingEmbedder::new(32, 0)));
        let chunks = vec![chunk("b", 0, "same words here"), chunk("a", 0, "same words here")];
        let out = rerank(&qa("same words"), chunks, &r).unwrap();
        assert_eq!(out[0].doc_id, "a");
        assert_eq!(out[0].rerank_score, out[1].rerank_score);
    }

    #[test]
    fn empty_input_is_contract_error() {
        let r = EmbeddingReranker::new(Arc::new(HashingEmbedder::new(8, 0)));
        assert!(rerank(&qa("x"), vec![], &r).is_err());
    }
}
