// SPDX-License-Identifier: Apache-2.0

//! Closed-book baseline metrics: Known rate, CB@n, Δn, coverage and the
//! utilization ratio.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::answer::{coverage_hit, exact_match};
use crate::corpus::QAItem;
use crate::error::{Error, Result};
use crate::generate::GenerationRecord;
use crate::retrieve::EvidenceBundle;

/// Evidence bundles keyed by `(query_id, n)` within one run.
pub type BundleMap = BTreeMap<(String, usize), EvidenceBundle>;

/// EM outcomes of one model at one scale, keyed by query id.
fn em_at<'a>(
    records: &'a [GenerationRecord],
    qa: &'a [QAItem],
    model_id: &str,
    n: usize,
) -> Result<HashMap<&'a str, u8>> {
    let by_query: HashMap<&str, &GenerationRecord> = records
        .iter()
        .filter(|r| r.model_id == model_id && r.n == n)
        .map(|r| (r.query_id.as_str(), r))
        .collect();
    qa.iter()
        .map(|q| {
            let r = by_query.get(q.query_id.as_str()).ok_or_else(|| Error::Missing {
                what: if n == 0 {
                    "closed-book record"
                } else {
                    "generation record"
                },
                name: format!("query {} model {model_id} n={n}", q.query_id),
            })?;
            Ok((q.query_id.as_str(), exact_match(&r.prediction, &q.gold_answers)))
        })
        .collect()
}

/// Fraction of questions answered exactly closed-book.
pub fn known_rate(records: &[GenerationRecord], qa: &[QAItem], model_id: &str) -> Result<f64> {
    if qa.is_empty() {
        return Err(Error::Contract("known rate over an empty question set".into()));
    }
    let em0 = em_at(records, qa, model_id, 0)?;
    Ok(em0.values().map(|&v| f64::from(v)).sum::<f64>() / qa.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CbValue {
    pub value: f64,
    /// Every question was already answered closed-book; `value` is 0 by convention.
    pub empty_population: bool,
}

/// Questions with EM = 0 closed-book, in `qa` order.
fn unknown_population<'a>(
    records: &[GenerationRecord],
    qa: &'a [QAItem],
    model_id: &str,
) -> Result<Vec<&'a QAItem>> {
    let em0 = em_at(records, qa, model_id, 0)?;
    Ok(qa.iter().filter(|q| em0[q.query_id.as_str()] == 0).collect())
}

/// Pr(EM_n = 1 | EM_0 = 0).
pub fn cb_at(records: &[GenerationRecord], qa: &[QAItem], model_id: &str, n: usize) -> Result<CbValue> {
    let population = unknown_population(records, qa, model_id)?;
    if population.is_empty() {
        return Ok(CbValue {
            value: 0.0,
            empty_population: true,
        });
    }
    let em = em_at(records, qa, model_id, n)?;
    let hits = population.iter().filter(|q| em[q.query_id.as_str()] == 1).count();
    Ok(CbValue {
        value: hits as f64 / population.len() as f64,
        empty_population: false,
    })
}

fn bundle_hit(bundles: &BundleMap, q: &QAItem, n: usize) -> Result<bool> {
    if n == 0 {
        return Ok(false);
    }
    let b = bundles
        .get(&(q.query_id.clone(), n))
        .ok_or_else(|| Error::Missing {
            what: "evidence bundle",
            name: format!("query {} n={n}", q.query_id),
        })?;
    Ok(coverage_hit(b, &q.gold_answers))
}

/// Fraction of `population` whose bundle at `n` contains a gold alias;
/// `None` for an empty population.
pub fn coverage_rate(bundles: &BundleMap, population: &[&QAItem], n: usize) -> Result<Option<f64>> {
    if population.is_empty() {
        return Ok(None);
    }
    let mut hits = 0usize;
    for q in population {
        hits += usize::from(bundle_hit(bundles, q, n)?);
    }
    Ok(Some(hits as f64 / population.len() as f64))
}

/// `cb / coverage`; undefined when coverage is zero.
pub fn utilization_ratio(cb: f64, coverage: f64) -> Option<f64> {
    (coverage > 0.0).then(|| cb / coverage)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CbPoint {
    pub n: usize,
    pub cb: f64,
    pub empty_population: bool,
    /// `cb(n) - cb(prev)`, where `prev` is the preceding scale of the series.
    pub delta: Option<f64>,
    /// Coverage over questions wrong closed-book; feeds the ratio.
    pub coverage: f64,
    /// Coverage over all questions.
    pub coverage_all: f64,
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CBSeries {
    pub model_id: String,
    pub known: f64,
    pub points: Vec<CbPoint>,
}

impl CBSeries {
    pub fn point(&self, n: usize) -> Option<&CbPoint> {
        self.points.iter().find(|p| p.n == n)
    }
}

/// `cb(n) - cb(n-1)`. Negative values mean questions regressed.
pub fn cb_delta(series: &CBSeries, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::Range {
            what: "delta scale",
            value: 0,
            min: 1,
            max: series.points.iter().map(|p| p.n).max().unwrap_or(0),
        });
    }
    let cb = |n: usize| {
        series.point(n).map(|p| p.cb).ok_or_else(|| Error::Missing {
            what: "CB point",
            name: format!("model {} n={n}", series.model_id),
        })
    };
    Ok(cb(n)? - cb(n - 1)?)
}

/// Builds the CB series of `model_id` over `scales` (0 is added if absent).
pub fn cb_series(
    records: &[GenerationRecord],
    bundles: &BundleMap,
    qa: &[QAItem],
    model_id: &str,
    scales: &[usize],
) -> Result<CBSeries> {
    let known = known_rate(records, qa, model_id)?;
    let population = unknown_population(records, qa, model_id)?;
    let everyone: Vec<&QAItem> = qa.iter().collect();
    let mut scales = scales.to_vec();
    scales.push(0);
    scales.sort_unstable();
    scales.dedup();
    let mut points: Vec<CbPoint> = Vec::with_capacity(scales.len());
    for n in scales {
        let cb = cb_at(records, qa, model_id, n)?;
        let coverage = coverage_rate(bundles, &population, n)?.unwrap_or(0.0);
        let coverage_all = coverage_rate(bundles, &everyone, n)?.unwrap_or(0.0);
        points.push(CbPoint {
            n,
            cb: cb.value,
            empty_population: cb.empty_population,
            delta: points.last().map(|p| cb.value - p.cb),
            coverage,
            coverage_all,
            ratio: utilization_ratio(cb.value, coverage),
        });
    }
    Ok(CBSeries {
        model_id: model_id.to_owned(),
        known,
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ActiveScale, ShardOrder};
    use crate::retrieve::{assemble_evidence, Chunk};

    fn rec(q: &str, n: usize, pred: &str) -> GenerationRecord {
        GenerationRecord {
            query_id: q.into(),
            model_id: "m".into(),
            n,
            order: ShardOrder::Forward,
            prediction: pred.into(),
            abstained: pred.is_empty(),
            latency_ms: 0,
            raw_response: String::new(),
            raw_request: String::new(),
            bundle_digest: String::new(),
            run_digest: String::new(),
        }
    }

    fn ten() -> Vec<QAItem> {
        (0..10)
            .map(|i| QAItem::new(format!("q{i}"), "?", [format!("a{i}")]))
            .collect()
    }

    /// q0..q3 known; of q4..q9, q4..q6 correct at n=1.
    fn records() -> Vec<GenerationRecord> {
        let mut out = Vec::new();
        for i in 0..10 {
            let q = format!("q{i}");
            let known = if i < 4 { format!("a{i}") } else { String::new() };
            out.push(rec(&q, 0, &known));
            let right = i < 7;
            out.push(rec(&q, 1, &if right { format!("a{i}") } else { "x".into() }));
        }
        out
    }

    fn bundle(q: &str, n: usize, text: &str) -> EvidenceBundle {
        let chunk = Chunk {
            chunk_id: "d#0".into(),
            doc_id: "d".into(),
            text: text.into(),
            token_span: (0, 1),
            rerank_score: Some(0.0),
        };
        assemble_evidence(q, ActiveScale::forward(n), vec![chunk], 8)
    }

    #[test]
    fn known_and_cb_conditional_count() {
        let qa = ten();
        let r = records();
        assert_eq!(known_rate(&r, &qa, "m").unwrap(), 0.4);
        let cb1 = cb_at(&r, &qa, "m", 1).unwrap();
        assert_eq!(cb1.value, 0.5);
        assert!(!cb1.empty_population);
        assert_eq!(cb_at(&r, &qa, "m", 0).unwrap().value, 0.0);
    }

    #[test]
    fn all_known_flags_empty_population() {
        let qa = ten();
        let r: Vec<_> = (0..10)
            .map(|i| rec(&format!("q{i}"), 0, &format!("a{i}")))
            .collect();
        let cb = cb_at(&r, &qa, "m", 0).unwrap();
        assert_eq!(
            cb,
            CbValue {
                value: 0.0,
                empty_population: true
            }
        );
        assert_eq!(known_rate(&r, &qa, "m").unwrap(), 1.0);
    }

    #[test]
    fn missing_closed_book_is_error() {
        let qa = ten();
        let r: Vec<_> = records().into_iter().filter(|r| r.n == 1).collect();
        assert!(matches!(known_rate(&r, &qa, "m"), Err(Error::Missing { .. })));
        assert!(matches!(cb_at(&r, &qa, "m", 1), Err(Error::Missing { .. })));
    }

    #[test]
    fn ratio_guarded() {
        assert_eq!(utilization_ratio(0.0, 0.5), Some(0.0));
        assert!((utilization_ratio(0.21, 0.60).unwrap() - 0.35).abs() < 1e-12);
        assert_eq!(utilization_ratio(0.0, 0.0), None);
    }

    fn series(cbs: &[f64]) -> CBSeries {
        CBSeries {
            model_id: "m".into(),
            known: 0.0,
            points: cbs
                .iter()
                .enumerate()
                .map(|(n, &cb)| CbPoint {
                    n,
                    cb,
                    empty_population: false,
                    delta: None,
                    coverage: 1.0,
                    coverage_all: 1.0,
                    ratio: None,
                })
                .collect(),
        }
    }

    #[test]
    fn delta_cases() {
        let s = series(&[0.0, 0.18, 0.21, 0.25, 0.31, 0.30]);
        assert!((cb_delta(&s, 1).unwrap() - 0.18).abs() < 1e-12);
        assert!((cb_delta(&s, 2).unwrap() - 0.03).abs() < 1e-12);
        assert!((cb_delta(&s, 5).unwrap() + 0.01).abs() < 1e-12);
        assert!(matches!(cb_delta(&s, 0), Err(Error::Range { .. })));
    }

    #[test]
    fn regression_fixture_gives_negative_delta() {
        // q4 correct at n=1, flips wrong at n=2.
        let qa = ten();
        let mut r = records();
        for i in 0..10 {
            let pred = if i == 4 {
                "wrong".to_string()
            } else {
                r[2 * i + 1].prediction.clone()
            };
            r.push(rec(&format!("q{i}"), 2, &pred));
        }
        let mut bundles = BundleMap::new();
        for q in &qa {
            for n in [1, 2] {
                bundles.insert(
                    (q.query_id.clone(), n),
                    bundle(&q.query_id, n, &q.gold_answers[0]),
                );
            }
        }
        let s = cb_series(&r, &bundles, &qa, "m", &[1, 2]).unwrap();
        assert_eq!(s.points.len(), 3);
        assert!((s.points[2].delta.unwrap() + 1.0 / 6.0).abs() < 1e-12);
        let sum: f64 = s.points.iter().filter_map(|p| p.delta).sum();
        assert!((sum - s.points[2].cb).abs() < 1e-12);
        assert_eq!(s.points[1].coverage, 1.0);
        assert!((s.points[1].ratio.unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn conditional_and_unconditional_coverage_differ() {
        let qa = ten();
        let r = records();
        let mut bundles = BundleMap::new();
        // Only the known questions q0..q3 have their answer in evidence.
        for (i, q) in qa.iter().enumerate() {
            let text = if i < 4 {
                q.gold_answers[0].clone()
            } else {
                "nothing".into()
            };
            bundles.insert((q.query_id.clone(), 1), bundle(&q.query_id, 1, &text));
        }
        let s = cb_series(&r, &bundles, &qa, "m", &[1]).unwrap();
        let p = s.point(1).unwrap();
        assert_eq!(p.coverage, 0.0);
        assert_eq!(p.coverage_all, 0.4);
        assert_eq!(p.ratio, None);
        let p0 = s.point(0).unwrap();
        assert_eq!((p0.cb, p0.coverage, p0.delta), (0.0, 0.0, None));
    }
}
