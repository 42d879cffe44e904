// SPDX-License-Identifier: Apache-2.0

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::answer::{exact_match, f1};
use crate::corpus::QAItem;
use crate::error::{Error, Result};
use crate::generate::GenerationRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Metric {
    F1,
    EM,
}

impl Metric {
    /// Per-question score in [0, 1].
    pub fn score<S: AsRef<str>>(self, prediction: &str, gold: &[S]) -> f64 {
        match self {
            Metric::F1 => f1(prediction, gold),
            Metric::EM => f64::from(exact_match(prediction, gold)),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::F1 => "F1",
            Metric::EM => "EM",
        })
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "F1" => Ok(Metric::F1),
            "EM" => Ok(Metric::EM),
            other => Err(Error::Config(format!("unknown metric `{other}`"))),
        }
    }
}

/// Scores on a 0–100 scale by corpus scale `n` and model. Cells never
/// written are holes, distinct from a score of zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreGrid {
    pub metric: Metric,
    pub dataset: String,
    models: Vec<String>,
    scales: Vec<usize>,
    values: BTreeMap<usize, BTreeMap<String, f64>>,
}

impl ScoreGrid {
    pub fn new(metric: Metric, dataset: impl Into<String>, models: Vec<String>, scales: Vec<usize>) -> Self {
        let mut scales = scales;
        scales.sort_unstable();
        scales.dedup();
        Self {
            metric,
            dataset: dataset.into(),
            models,
            scales,
            values: BTreeMap::new(),
        }
    }

    pub fn models(&self) -> &[String] {
        &self.models
    }

    pub fn scales(&self) -> &[usize] {
        &self.scales
    }

    pub fn set(&mut self, n: usize, model: &str, score: f64) -> Result<()> {
        if !(0.0..=100.0).contains(&score) {
            return Err(Error::Integrity(format!(
                "score {score} for ({n}, {model}) outside [0, 100]"
            )));
        }
        if !self.models.iter().any(|m| m == model) || !self.scales.contains(&n) {
            return Err(Error::Integrity(format!(
                "cell ({n}, {model}) not declared in the grid"
            )));
        }
        self.values.entry(n).or_default().insert(model.to_owned(), score);
        Ok(())
    }

    pub fn get(&self, n: usize, model: &str) -> Option<f64> {
        self.values.get(&n).and_then(|row| row.get(model)).copied()
    }

    pub fn holes(&self) -> usize {
        self.scales.len() * self.models.len() - self.values.values().map(BTreeMap::len).sum::<usize>()
    }
}

/// Aggregates per-question scores into a grid. Models appear in the order
/// they first occur in `records`; a cell missing any question of `qa` is a hole.
pub fn score_grid(
    records: &[GenerationRecord],
    qa: &[QAItem],
    metric: Metric,
    dataset: &str,
) -> Result<ScoreGrid> {
    let gold: HashMap<&str, &QAItem> = qa.iter().map(|q| (q.query_id.as_str(), q)).collect();
    let mut models: Vec<String> = Vec::new();
    let mut scales = BTreeSet::new();
    let mut seen = HashSet::new();
    let mut cells: BTreeMap<(usize, &str), (f64, usize)> = BTreeMap::new();
    for r in records {
        let item = gold
            .get(r.query_id.as_str())
            .ok_or_else(|| Error::Integrity(format!("record for unknown query `{}`", r.query_id)))?;
        if !seen.insert((r.query_id.as_str(), r.model_id.as_str(), r.n)) {
            return Err(Error::Integrity(format!(
                "duplicate record for ({}, {}, {})",
                r.query_id, r.model_id, r.n
            )));
        }
        if !models.contains(&r.model_id) {
            models.push(r.model_id.clone());
        }
        scales.insert(r.n);
        let cell = cells.entry((r.n, r.model_id.as_str())).or_insert((0.0, 0));
        cell.0 += metric.score(&r.prediction, &item.gold_answers);
        cell.1 += 1;
    }
    let mut grid = ScoreGrid::new(metric, dataset, models, scales.into_iter().collect());
    for ((n, model), (sum, count)) in cells {
        if count == qa.len() && count > 0 {
            grid.set(n, model, 100.0 * sum / count as f64)?;
        }
    }
    Ok(grid)
}

/// Smallest scale at which `small` meets `large`'s single-shard score,
/// minimized over F1 and EM. `None` when neither metric ever catches up.
/// Holes in the `small` column are skipped.
pub fn catch_up(f1_grid: &ScoreGrid, em_grid: &ScoreGrid, small: &str, large: &str) -> Result<Option<usize>> {
    let mut best: Option<usize> = None;
    for grid in [f1_grid, em_grid] {
        let baseline = grid.get(1, large).ok_or_else(|| Error::Missing {
            what: "baseline cell",
            name: format!("{} n=1 model={large}", grid.metric),
        })?;
        let first = grid
            .scales()
            .iter()
            .copied()
            .filter(|&n| n >= 1)
            .find(|&n| grid.get(n, small).is_some_and(|s| s >= baseline));
        best = match (best, first) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatchUpEntry {
    pub small: String,
    pub large: String,
    pub n_star: Option<usize>,
}

/// Catch-up thresholds for each adjacent pair of `tiers`.
pub fn catch_up_matrix(
    f1_grid: &ScoreGrid,
    em_grid: &ScoreGrid,
    tiers: &[String],
) -> Result<Vec<CatchUpEntry>> {
    tiers
        .windows(2)
        .map(|w| {
            Ok(CatchUpEntry {
                small: w[0].clone(),
                large: w[1].clone(),
                n_star: catch_up(f1_grid, em_grid, &w[0], &w[1])?,
            })
        })
        .collect()
}

#[derive(Debug, Deserialize, Serialize)]
struct FixtureRow {
    dataset: String,
    metric: String,
    model: String,
    n: usize,
    score: f64,
}

/// Reads `dataset,metric,model,n,score` rows into one grid per (dataset, metric),
/// in first-appearance order.
pub fn read_grid_fixture<R: Read>(reader: R) -> Result<Vec<ScoreGrid>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut order: Vec<(String, Metric)> = Vec::new();
    let mut rows: HashMap<(String, Metric), Vec<FixtureRow>> = HashMap::new();
    for (i, row) in rdr.deserialize::<FixtureRow>().enumerate() {
        let row = row.map_err(|e| Error::Parse {
            line: i + 2,
            reason: e.to_string(),
        })?;
        let metric: Metric = row.metric.parse().map_err(|e: Error| Error::Parse {
            line: i + 2,
            reason: e.to_string(),
        })?;
        let key = (row.dataset.clone(), metric);
        if !rows.contains_key(&key) {
            order.push(key.clone());
        }
        rows.entry(key).or_default().push(row);
    }
    let mut grids = Vec::new();
    for key in order {
        let rows = rows.remove(&key).expect("grouped");
        let mut models: Vec<String> = Vec::new();
        for r in &rows {
            if !models.contains(&r.model) {
                models.push(r.model.clone());
            }
        }
        let scales = rows.iter().map(|r| r.n).collect();
        let mut grid = ScoreGrid::new(key.1, key.0, models, scales);
        for r in &rows {
            if grid.get(r.n, &r.model).is_some() {
                return Err(Error::Integrity(format!(
                    "duplicate fixture cell {} {} {} {}",
                    grid.dataset, grid.metric, r.model, r.n
                )));
            }
            grid.set(r.n, &r.model, r.score)?;
        }
        grids.push(grid);
    }
    Ok(grids)
}

/// Writes grids in the fixture format; holes are omitted.
pub fn write_grid_fixture<W: Write>(writer: W, grids: &[ScoreGrid]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for g in grids {
        for model in g.models() {
            for &n in g.scales() {
                if let Some(score) = g.get(n, model) {
                    w.write_record([
                        g.dataset.as_str(),
                        &g.metric.to_string(),
                        model,
                        &n.to_string(),
                        &format!("{score:.2}"),
                    ])?;
                }
            }
        }
    }
    w.flush().map_err(|e| Error::io("writing grid fixture", e))
}
