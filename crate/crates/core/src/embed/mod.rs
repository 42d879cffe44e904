// SPDX-License-Identifier: Apache-2.0

//! Text embedders. Queries and passages share one vector space; each embedder
//! may prepend a role-specific instruction prefix.

mod hashing;
mod remote;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use hashing::HashingEmbedder;
pub use remote::{RemoteEmbedder, RemoteEmbedderConfig, EMBED_ENDPOINT_ENV, EMBED_TOKEN_ENV};

/// Tolerance for the unit-norm contract.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(Vec<f32>);

impl EmbeddingVector {
    pub fn new(values: Vec<f32>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Integrity("embedding has zero dimensions".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Integrity(format!("embedding component {i} is not finite")));
        }
        Ok(Self(values))
    }

    pub fn dims(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f32] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f32> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        self.0
            .iter()
            .map(|&v| f64::from(v) * f64::from(v))
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_unit(&self) -> bool {
        (self.norm() - 1.0).abs() <= UNIT_NORM_TOLERANCE
    }

    /// Scales to unit length. Vectors already within tolerance are returned
    /// unchanged so that re-normalization is bit-stable.
    pub fn normalized(self) -> Result<Self> {
        let norm = self.norm();
        if norm == 0.0 {
            return Err(Error::Integrity("cannot normalize a zero vector".into()));
        }
        if (norm - 1.0).abs() <= UNIT_NORM_TOLERANCE {
            return Ok(self);
        }
        let inv = (1.0 / norm) as f32;
        Ok(Self(self.0.into_iter().map(|v| v * inv).collect()))
    }

    pub fn dot(&self, other: &EmbeddingVector) -> f32 {
        dot(&self.0, &other.0)
    }
}

const LANES: usize = 8;

/// f32 inner product with a fixed 8-lane summation order, so the result is
/// the same on every path and platform. Every scorer in the crate goes
/// through this.
#[inline]
pub fn dot(a: &[f32], b: &[f32]) -> f32 {
    let len = a.len().min(b.len());
    let (a, b) = (&a[..len], &b[..len]);
    let mut acc = [0.0f32; LANES];
    let mut ca = a.chunks_exact(LANES);
    let mut cb = b.chunks_exact(LANES);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for i in 0..LANES {
            acc[i] += x[i] * y[i];
        }
    }
    let mut tail = 0.0f32;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += x * y;
    }
    let pairs = [acc[0] + acc[4], acc[1] + acc[5], acc[2] + acc[6], acc[3] + acc[7]];
    (pairs[0] + pairs[2]) + (pairs[1] + pairs[3]) + tail
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TextRole {
    Query,
    Passage,
}

pub trait Embedder: Send + Sync {
    fn dims(&self) -> usize;

    /// Whether every output vector has unit L2 norm.
    fn unit_norm(&self) -> bool;

    /// Stable description of the embedder configuration, recorded with indices.
    fn fingerprint(&self) -> String;

    /// Embeds a batch of non-empty texts, one vector per text in order.
    fn embed_batch(&self, texts: &[&str], role: TextRole) -> Result<Vec<EmbeddingVector>>;
}

impl<E: Embedder + ?Sized> Embedder for Arc<E> {
    fn dims(&self) -> usize {
        (**self).dims()
    }
    fn unit_norm(&self) -> bool {
        (**self).unit_norm()
    }
    fn fingerprint(&self) -> String {
        (**self).fingerprint()
    }
    fn embed_batch(&self, texts: &[&str], role: TextRole) -> Result<Vec<EmbeddingVector>> {
        (**self).embed_batch(texts, role)
    }
}

/// Validated entry point: rejects empty inputs and checks output alignment.
pub fn embed_texts<E: Embedder + ?Sized, S: AsRef<str>>(
    embedder: &E,
    texts: &[S],
    role: TextRole,
) -> Result<Vec<EmbeddingVector>> {
    if texts.is_empty() {
        return Err(Error::Contract("no texts to embed".into()));
    }
    let refs: Vec<&str> = texts.iter().map(AsRef::as_ref).collect();
    if let Some(i) = refs.iter().position(|t| t.trim().is_empty()) {
        return Err(Error::Contract(format!("text at index {i} is empty")));
    }
    let out = embedder.embed_batch(&refs, role)?;
    if out.len() != refs.len() {
        return Err(Error::Integrity(format!(
            "embedder returned {} vectors for {} texts",
            out.len(),
            refs.len()
        )));
    }
    let dims = embedder.dims();
    if let Some((i, v)) = out.iter().enumerate().find(|(_, v)| v.dims() != dims) {
        return Err(Error::Integrity(format!(
            "vector {i} has {} dims, expected {dims}",
            v.dims()
        )));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_matches_f64_sum_for_any_length() {
        for len in [0, 1, 7, 8, 9, 31, 256, 1000] {
            let a: Vec<f32> = (0..len).map(|i| ((i * 37 % 11) as f32 - 5.0) / 7.0).collect();
            let b: Vec<f32> = (0..len).map(|i| ((i * 13 % 17) as f32 - 8.0) / 9.0).collect();
            let want: f64 = a.iter().zip(&b).map(|(x, y)| *x as f64 * *y as f64).sum();
            assert!((dot(&a, &b) as f64 - want).abs() < 1e-4, "len {len}");
            assert_eq!(dot(&a, &b), dot(&b, &a));
        }
    }

    #[test]
    fn non_finite_rejected() {
        assert!(EmbeddingVector::new(vec![1.0, f32::NAN]).is_err());
        assert!(EmbeddingVector::new(vec![]).is_err());
    }

    #[test]
    fn normalize_is_stable_on_unit_vectors() {
        let v = EmbeddingVector::new(vec![3.0, 4.0])
            .unwrap()
            .normalized()
            .unwrap();
        assert!(v.is_unit());
        let again = v.clone().normalized().unwrap();
        assert_eq!(v, again);
        assert!(EmbeddingVector::new(vec![0.0, 0.0])
            .unwrap()
            .normalized()
            .is_err());
    }

    struct Ragged;
    impl Embedder for Ragged {
        fn dims(&self) -> usize {
            2
        }
        fn unit_norm(&self) -> bool {
            false
        }
        fn fingerprint(&self) -> String {
            "ragged".into()
        }
        fn embed_batch(&self, texts: &[&str], _: TextRole) -> Result<Vec<EmbeddingVector>> {
            texts
                .iter()
                .enumerate()
                .map(|(i, _)| EmbeddingVector::new(vec![1.0; 2 + i]))
                .collect()
        }
    }

    #[test]
    fn dims_mismatch_is_integrity_error() {
        let err = embed_texts(&Ragged, &["a", "b"], TextRole::Passage).unwrap_err();
        assert!(matches!(err, Error::Integrity(_)));
    }

    #[test]
    fn empty_text_names_index() {
        let e = HashingEmbedder::new(8, 0);
        let err = embed_texts(&e, &["ok", "", "x"], TextRole::Passage).unwrap_err();
        assert!(err.to_string().contains("index 1"), "{err}");
        assert!(embed_texts::<_, &str>(&e, &[], TextRole::Passage).is_err());
    }
}
