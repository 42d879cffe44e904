// SPDX-License-Identifier: Apache-2.0

//! Documents, QA items and the balanced random shard partition.

mod qa;
mod shard;

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::digest::LineDigest;
use crate::error::{Error, IoContext, Result};

pub use qa::{load_qa, parse_qa, QAItem};
pub use shard::{active_shards, partition, ActiveScale, ShardOrder, ShardPlan, ShardPlanManifest};

/// File name of the document store inside a corpus directory.
pub const DOCUMENTS_FILE: &str = "documents.jsonl";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, String>,
}

impl Document {
    pub fn new(doc_id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            doc_id: doc_id.into(),
            text: text.into(),
            metadata: BTreeMap::new(),
        }
    }
}

/// An input record as it appears on the wire; fields are validated on ingest.
#[derive(Debug, Clone, Default, Deserialize)]
pub struct RawDocument {
    pub doc_id: Option<String>,
    pub text: Option<String>,
    #[serde(default)]
    pub metadata: Option<BTreeMap<String, String>>,
}

impl From<Document> for RawDocument {
    fn from(doc: Document) -> Self {
        RawDocument {
            doc_id: Some(doc.doc_id),
            text: Some(doc.text),
            metadata: Some(doc.metadata),
        }
    }
}

/// In-memory document store keyed by `doc_id`.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    docs: BTreeMap<String, Document>,
}

impl Corpus {
    pub fn new() -> Self {
        Self::default()
    }

    /// Validates and adds every record, or none of them.
    ///
    /// Record ordinals in errors are 1-based positions within `records`.
    pub fn ingest<I>(&mut self, records: I) -> Result<usize>
    where
        I: IntoIterator<Item = RawDocument>,
    {
        let mut staged: BTreeMap<String, Document> = BTreeMap::new();
        for (i, raw) in records.into_iter().enumerate() {
            let ordinal = i + 1;
            let doc_id = raw
                .doc_id
                .filter(|id| !id.is_empty())
                .ok_or_else(|| Error::Ingest {
                    ordinal,
                    reason: "missing doc_id".into(),
                })?;
            let text = raw
                .text
                .filter(|t| !t.trim().is_empty())
                .ok_or_else(|| Error::Ingest {
                    ordinal,
                    reason: format!("document `{doc_id}` has no text"),
                })?;
            if self.docs.contains_key(&doc_id) || staged.contains_key(&doc_id) {
                return Err(Error::Conflict {
                    what: "doc_id",
                    key: doc_id,
                });
            }
            let doc = Document {
                doc_id: doc_id.clone(),
                text,
                metadata: raw.metadata.unwrap_or_default(),
            };
            staged.insert(doc_id, doc);
        }
        self.docs.extend(staged);
        Ok(self.docs.len())
    }

    pub fn from_documents<I: IntoIterator<Item = Document>>(docs: I) -> Result<Self> {
        let mut corpus = Corpus::new();
        corpus.ingest(docs.into_iter().map(RawDocument::from))?;
        Ok(corpus)
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn get(&self, doc_id: &str) -> Option<&Document> {
        self.docs.get(doc_id)
    }

    /// Documents in ascending `doc_id` byte order.
    pub fn documents(&self) -> impl Iterator<Item = &Document> {
        self.docs.values()
    }

    pub fn doc_ids(&self) -> impl Iterator<Item = &str> {
        self.docs.keys().map(String::as_str)
    }

    /// Digest over the canonical serialization of every document in id order.
    pub fn digest(&self) -> String {
        let mut d = LineDigest::new();
        for doc in self.docs.values() {
            d.line(serde_json::to_vec(doc).expect("document serializes"));
        }
        d.finish()
    }

    /// Writes the store as `documents.jsonl` under `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).ctx(|| format!("creating {}", dir.display()))?;
        let path = dir.join(DOCUMENTS_FILE);
        let file = File::create(&path).ctx(|| format!("creating {}", path.display()))?;
        let mut w = BufWriter::new(file);
        for doc in self.docs.values() {
            serde_json::to_writer(&mut w, doc)?;
            w.write_all(b"\n").ctx(|| format!("writing {}", path.display()))?;
        }
        w.flush().ctx(|| format!("writing {}", path.display()))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(DOCUMENTS_FILE);
        let file = File::open(&path).map_err(|_| Error::Missing {
            what: "document store",
            name: path.display().to_string(),
        })?;
        let mut corpus = Corpus::new();
        corpus.ingest(read_records(BufReader::new(file))?)?;
        Ok(corpus)
    }
}

/// Parses newline-delimited JSON document records. Blank lines are skipped;
/// ordinals in errors count records, not lines.
pub fn read_records<R: BufRead>(reader: R) -> Result<Vec<RawDocument>> {
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line.ctx(|| "reading document records".to_string())?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawDocument = serde_json::from_str(&line).map_err(|e| Error::Ingest {
            ordinal: out.len() + 1,
            reason: e.to_string(),
        })?;
        out.push(raw);
    }
    Ok(out)
}

/// Builds a corpus from a newline-delimited record stream.
pub fn ingest_corpus<R: BufRead>(reader: R) -> Result<Corpus> {
    let mut corpus = Corpus::new();
    corpus.ingest(read_records(reader)?)?;
    Ok(corpus)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(id: &str, text: &str) -> RawDocument {
        RawDocument {
            doc_id: Some(id.into()),
            text: Some(text.into()),
            metadata: None,
        }
    }

    #[test]
    fn three_records() {
        let mut c = Corpus::new();
        let n = c
            .ingest(vec![raw("a", "x"), raw("b", "y"), raw("c", "z")])
            .unwrap();
        assert_eq!(n, 3);
    }

    #[test]
    fn missing_text_names_ordinal() {
        let input = "{\"doc_id\":\"a\",\"text\":\"x\"}\n{\"doc_id\":\"b\"}\n";
        let err = ingest_corpus(input.as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Ingest { ordinal: 2, .. }), "{err}");
    }

    #[test]
    fn malformed_json_names_ordinal() {
        let input = "{\"doc_id\":\"a\",\"text\":\"x\"}\n\n{oops\n";
        let err = ingest_corpus(input.as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Ingest { ordinal: 2, .. }), "{err}");
    }

    #[test]
    fn synthetic_ten_thousand_then_duplicate() {
        let records: Vec<_> = (0..10_000)
            .map(|i| raw(&format!("doc-{i:05}"), &format!("text {i}")))
            .collect();
        let mut c = Corpus::new();
        assert_eq!(c.ingest(records.clone()).unwrap(), 10_000);
        let err = c.ingest(records).unwrap_err();
        assert!(matches!(err, Error::Conflict { .. }));
        assert_eq!(c.len(), 10_000);
    }

    #[test]
    fn duplicate_within_stream_rejected_atomically() {
        let mut c = Corpus::new();
        let err = c
            .ingest(vec![raw("a", "x"), raw("b", "y"), raw("a", "z")])
            .unwrap_err();
        assert!(matches!(err, Error::Conflict { .. }));
        assert!(c.is_empty());
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let c = Corpus::from_documents(vec![Document::new("b", "two"), Document::new("a", "one")]).unwrap();
        c.save(dir.path()).unwrap();
        let back = Corpus::load(dir.path()).unwrap();
        assert_eq!(back.digest(), c.digest());
        assert_eq!(back.doc_ids().collect::<Vec<_>>(), vec!["a", "b"]);
    }
}
