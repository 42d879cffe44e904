// SPDX-License-Identifier: Apache-2.0

use super::{Embedder, EmbeddingVector, TextRole};
use crate::error::{Error, Result};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// Deterministic bag-of-words embedder: lowercased whitespace tokens are
/// hashed into `dims` buckets, counted, and L2-normalized.
#[derive(Debug, Clone)]
pub struct HashingEmbedder {
    dims: usize,
    seed: u64,
    query_prefix: String,
    passage_prefix: String,
}

impl HashingEmbedder {
    pub fn new(dims: usize, seed: u64) -> Self {
        assert!(dims > 0, "dims must be positive");
        Self {
            dims,
            seed,
            query_prefix: String::new(),
            passage_prefix: String::new(),
        }
    }

    pub fn with_prefixes(mut self, query: impl Into<String>, passage: impl Into<String>) -> Self {
        self.query_prefix = query.into();
        self.passage_prefix = passage.into();
        self
    }

    fn bucket(&self, token: &str) -> usize {
        let mut h = FNV_OFFSET ^ self.seed.wrapping_mul(FNV_PRIME);
        for b in token.bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(FNV_PRIME);
        }
        (h % self.dims as u64) as usize
    }

    pub fn embed_one(&self, text: &str, role: TextRole) -> Result<EmbeddingVector> {
        let prefix = match role {
            TextRole::Query => &self.query_prefix,
            TextRole::Passage => &self.passage_prefix,
        };
        let lowered = format!("{prefix}{text}").to_lowercase();
        let mut counts = vec![0.0f32; self.dims];
        let mut any = false;
        for token in lowered.split_whitespace() {
            counts[self.bucket(token)] += 1.0;
            any = true;
        }
        if !any {
            return Err(Error::Contract("cannot embed text without tokens".into()));
        }
        EmbeddingVector::new(counts)?.normalized()
    }
}

impl Embedder for HashingEmbedder {
    fn dims(&self) -> usize {
        self.dims
    }

    fn unit_norm(&self) -> bool {
        true
    }

    fn fingerprint(&self) -> String {
        format!(
            "hashing:dims={},seed={},qp={:?},pp={:?}",
            self.dims, self.seed, self.query_prefix, self.passage_prefix
        )
    }

    fn embed_batch(&self, texts: &[&str], role: TextRole) -> Result<Vec<EmbeddingVector>> {
        texts.iter().map(|t| self.embed_one(t, role)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::embed_texts;
    use proptest::prelude::*;

    #[test]
    fn same_text_same_vector() {
        let e = HashingEmbedder::new(64, 7);
        let v = embed_texts(&e, &["a b c", "a b c"], TextRole::Passage).unwrap();
        assert_eq!(v[0], v[1]);
    }

    #[test]
    fn sprite_is_unit_norm() {
        let e = HashingEmbedder::new(64, 0);
        let v = e.embed_one("sprite", TextRole::Passage).unwrap();
        assert_eq!(v.dims(), 64);
        // One token in one bucket: exactly one component equal to 1.
        assert_eq!(v.values().iter().filter(|&&x| x != 0.0).count(), 1);
        assert!((v.norm() - 1.0).abs() <= 1e-6);
    }

    #[test]
    fn case_insensitive_and_self_cosine() {
        let e = HashingEmbedder::new(32, 1);
        let a = e.embed_one("Obey Your Thirst", TextRole::Query).unwrap();
        let b = e.embed_one("obey your thirst", TextRole::Query).unwrap();
        assert_eq!(a, b);
        assert!((a.dot(&a) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn prefixes_change_query_side_only() {
        let e = HashingEmbedder::new(32, 1).with_prefixes("query: ", "");
        let q = e.embed_one("sprite", TextRole::Query).unwrap();
        let p = e.embed_one("sprite", TextRole::Passage).unwrap();
        assert_ne!(q, p);
        assert_ne!(e.fingerprint(), HashingEmbedder::new(32, 1).fingerprint());
    }

    proptest! {
        #[test]
        fn pure_function_of_inputs(text in "[a-z ]{1,40}[a-z]", dims in 1usize..128, seed: u64) {
            let a = HashingEmbedder::new(dims, seed).embed_one(&text, TextRole::Passage).unwrap();
            let b = HashingEmbedder::new(dims, seed).embed_one(&text, TextRole::Passage).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert!((a.norm() - 1.0).abs() <= 1e-6);
        }
    }
}
