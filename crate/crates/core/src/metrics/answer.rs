// SPDX-License-Identifier: Apache-2.0

//! Answer normalization and token-level scoring.
//!
//! Normalization follows the usual open-domain QA rules: lowercase, drop
//! ASCII punctuation, drop the articles `a`/`an`/`the`, split on whitespace.

use std::collections::HashMap;

use crate::retrieve::EvidenceBundle;

const ARTICLES: [&str; 3] = ["a", "an", "the"];

pub fn normalize_answer(text: &str) -> Vec<String> {
    let cleaned: String = text
        .to_lowercase()
        .chars()
        .filter(|c| !c.is_ascii_punctuation())
        .collect();
    cleaned
        .split_whitespace()
        .filter(|t| !ARTICLES.contains(t))
        .map(str::to_owned)
        .collect()
}

/// 1 if the normalized prediction equals the normalized form of any alias.
pub fn exact_match<S: AsRef<str>>(prediction: &str, gold_answers: &[S]) -> u8 {
    let pred = normalize_answer(prediction);
    u8::from(gold_answers.iter().any(|g| normalize_answer(g.as_ref()) == pred))
}

fn token_f1(pred: &[String], gold: &[String]) -> f64 {
    if pred.is_empty() || gold.is_empty() {
        return if pred.is_empty() && gold.is_empty() {
            1.0
        } else {
            0.0
        };
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in gold {
        *counts.entry(t).or_default() += 1;
    }
    let mut common = 0usize;
    for t in pred {
        if let Some(c) = counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / pred.len() as f64;
    let recall = common as f64 / gold.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Max over aliases of multiset token F1.
pub fn f1<S: AsRef<str>>(prediction: &str, gold_answers: &[S]) -> f64 {
    let pred = normalize_answer(prediction);
    gold_answers
        .iter()
        .map(|g| token_f1(&pred, &normalize_answer(g.as_ref())))
        .fold(0.0, f64::max)
}

/// True if `needle` occurs contiguously in `haystack`. An empty needle never matches.
pub fn contains_tokens(haystack: &[String], needle: &[String]) -> bool {
    !needle.is_empty()
        && needle.len() <= haystack.len()
        && haystack.windows(needle.len()).any(|w| w == needle)
}

/// First gold alias (in list order) whose normalized tokens occur in `text`.
pub fn find_alias<'a, S: AsRef<str>>(text: &str, gold_answers: &'a [S]) -> Option<&'a str> {
    let tokens = normalize_answer(text);
    gold_answers
        .iter()
        .map(AsRef::as_ref)
        .find(|g| contains_tokens(&tokens, &normalize_answer(g)))
}

/// Whether any chunk of the bundle contains a gold alias.
pub fn coverage_hit<S: AsRef<str>>(bundle: &EvidenceBundle, gold_answers: &[S]) -> bool {
    bundle
        .chunks
        .iter()
        .any(|c| find_alias(&c.text, gold_answers).is_some())
}
