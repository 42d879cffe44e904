// SPDX-License-Identifier: Apache-2.0

//! Seeded planted-answer corpora: every question has exactly one document
//! stating its answer, surrounded by filler and decoy documents.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Corpus, Document, QAItem};
use crate::error::{Error, IoContext, Result};

const FILLER_SYLLABLES: [&str; 16] = [
    "ba", "de", "fi", "go", "hu", "ka", "le", "mi", "no", "pu", "ra", "se", "ti", "vo", "wu", "ye",
];
const NAME_SYLLABLES: [&str; 12] = [
    "zor", "qua", "xel", "vyn", "thar", "jix", "oum", "kry", "plo", "sna", "drev", "glim",
];
const TOPIC_SYLLABLES: [&str; 10] = [
    "ost", "ern", "ilk", "umb", "arx", "ept", "ond", "isk", "uld", "orp",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyntheticConfig {
    pub documents: usize,
    pub questions: usize,
    /// Filler tokens per document.
    pub doc_tokens: usize,
    /// Topic keywords per question.
    pub keywords: usize,
    /// Decoy documents per question that share topic keywords but omit the answer.
    pub decoys: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            documents: 500,
            questions: 100,
            doc_tokens: 60,
            keywords: 4,
            decoys: 1,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub corpus: Corpus,
    pub qa: Vec<QAItem>,
    /// Query id to the id of the only document containing its answer.
    pub answer_docs: BTreeMap<String, String>,
}

fn word(rng: &mut ChaCha8Rng, syllables: &[&str], parts: usize) -> String {
    (0..parts)
        .map(|_| *syllables.choose(rng).expect("non-empty"))
        .collect()
}

/// Draws `count` distinct words, none of which is in `taken`.
fn distinct_words(
    rng: &mut ChaCha8Rng,
    syllables: &[&str],
    parts: usize,
    count: usize,
    taken: &mut BTreeSet<String>,
) -> Vec<String> {
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let w = word(rng, syllables, parts);
        if taken.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

fn filler(rng: &mut ChaCha8Rng, vocab: &[String], tokens: usize) -> Vec<String> {
    (0..tokens)
        .map(|_| vocab.choose(rng).expect("vocab").clone())
        .collect()
}

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    c.next()
        .map(|f| f.to_uppercase().chain(c).collect())
        .unwrap_or_default()
}

pub fn generate(cfg: &SyntheticConfig) -> Result<SyntheticDataset> {
    let needed = cfg.questions * (1 + cfg.decoys);
    if cfg.questions == 0 || needed > cfg.documents {
        return Err(Error::Config(format!(
            "{} questions with {} decoys each need at least {needed} documents, have {}",
            cfg.questions, cfg.decoys, cfg.documents
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut taken = BTreeSet::new();
    let vocab = distinct_words(&mut rng, &FILLER_SYLLABLES, 3, 400, &mut taken);
    let mut ids: Vec<usize> = (0..cfg.documents).collect();
    ids.shuffle(&mut rng);
    let doc_id = |i: usize| format!("doc-{i:05}");

    let mut docs = Vec::with_capacity(cfg.documents);
    let mut qa = Vec::with_capacity(cfg.questions);
    let mut answer_docs = BTreeMap::new();
    let mut next = ids.iter().copied();
    for q in 0..cfg.questions {
        let keywords = distinct_words(&mut rng, &TOPIC_SYLLABLES, 3, cfg.keywords, &mut taken);
        let name = distinct_words(&mut rng, &NAME_SYLLABLES, 3, 2, &mut taken);
        let answer = format!("{} {}", capitalize(&name[0]), capitalize(&name[1]));
        let query_id = format!("q{q:04}");

        let mut body = filler(&mut rng, &vocab, cfg.doc_tokens);
        let at = rng.random_range(0..=body.len());
        let fact = format!("{} is known as {answer}.", keywords.join(" "));
        body.insert(at, fact);
        let id = doc_id(next.next().expect("enough ids"));
        docs.push(Document::new(&id, body.join(" ")));
        answer_docs.insert(query_id.clone(), id);

        for _ in 0..cfg.decoys {
            let mut body = filler(&mut rng, &vocab, cfg.doc_tokens);
            let half = &keywords[..keywords.len().div_ceil(2)];
            let at = rng.random_range(0..=body.len());
            body.insert(at, half.join(" "));
            docs.push(Document::new(
                doc_id(next.next().expect("enough ids")),
                body.join(" "),
            ));
        }

        qa.push(QAItem::new(
            query_id,
            format!("What is {} known as?", keywords.join(" ")),
            [answer],
        ));
    }
    for i in next {
        docs.push(Document::new(
            doc_id(i),
            filler(&mut rng, &vocab, cfg.doc_tokens).join(" "),
        ));
    }
    Ok(SyntheticDataset {
        corpus: Corpus::from_documents(docs)?,
        qa,
        answer_docs,
    })
}

impl SyntheticDataset {
    /// Writes `documents.jsonl` and `qa.jsonl` under `dir`; returns their paths.
    pub fn write(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        fs::create_dir_all(dir).ctx(|| format!("creating {}", dir.display()))?;
        let docs = dir.join("documents.jsonl");
        let qa = dir.join("qa.jsonl");
        write_lines(&docs, self.corpus.documents())?;
        write_lines(&qa, self.qa.iter())?;
        Ok((docs, qa))
    }
}

fn write_lines<'a, T: serde::Serialize + 'a>(path: &Path, items: impl Iterator<Item = &'a T>) -> Result<()> {
    let file = File::create(path).ctx(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n").ctx(|| format!("writing {}", path.display()))?;
    }
    w.flush().ctx(|| format!("writing {}", path.display()))
}
