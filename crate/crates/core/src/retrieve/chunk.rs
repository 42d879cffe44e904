// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chunk {
    pub chunk_id: String,
    pub doc_id: String,
    pub text: String,
    /// `[start, end)` in whitespace-token coordinates of the document.
    pub token_span: (usize, usize),
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rerank_score: Option<f32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkParams {
    pub chunk_tokens: usize,
    pub overlap_tokens: usize,
}

impl Default for ChunkParams {
    fn default() -> Self {
        Self {
            chunk_tokens: 256,
            overlap_tokens: 64,
        }
    }
}

impl ChunkParams {
    pub fn validate(&self) -> Result<()> {
        if self.chunk_tokens == 0 || self.overlap_tokens >= self.chunk_tokens {
            return Err(Error::Config(format!(
                "chunk overlap {} must be smaller than chunk size {}",
                self.overlap_tokens, self.chunk_tokens
            )));
        }
        Ok(())
    }

    pub fn stride(&self) -> usize {
        self.chunk_tokens - self.overlap_tokens
    }
}

/// Byte ranges of the whitespace-separated tokens of `text`.
pub fn token_spans(text: &str) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut start = None;
    for (i, ch) in text.char_indices() {
        match (ch.is_whitespace(), start) {
            (true, Some(s)) => {
                spans.push((s, i));
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    if let Some(s) = start {
        spans.push((s, text.len()));
    }
    spans
}

/// Sliding token windows over each document, in (document, start) order.
/// Chunk text is the original document text between the first and last token.
pub fn chunk_documents(docs: &[&Document], params: ChunkParams) -> Result<Vec<Chunk>> {
    params.validate()?;
    let stride = params.stride();
    let mut out = Vec::new();
    for doc in docs {
        let spans = token_spans(&doc.text);
        let len = spans.len();
        let mut start = 0;
        while start < len {
            let end = (start + params.chunk_tokens).min(len);
            let bytes = spans[start].0..spans[end - 1].1;
            out.push(Chunk {
                chunk_id: format!("{}#{start}", doc.doc_id),
                doc_id: doc.doc_id.clone(),
                text: doc.text[bytes].to_owned(),
                token_span: (start, end),
                rerank_score: None,
            });
            if end == len {
                break;
            }
            start += stride;
        }
    }
    Ok(out)
}
