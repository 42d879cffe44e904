// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::log::{RunLog, LOG_FILE};
use super::manifest::{load_qa_snapshot, RunManifest};
use crate::corpus::{QAItem, ShardOrder};
use crate::error::{Error, Result};
use crate::generate::GenerationRecord;
use crate::metrics::{
    catch_up_matrix, cb_series, coverage_rate, known_rate, score_grid, BundleMap, CBSeries, CatchUpEntry,
    Metric, ScoreGrid,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoveragePoint {
    pub n: usize,
    /// Over all questions.
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub dataset: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<ShardOrder>,
    pub tiers: Vec<String>,
    pub f1: ScoreGrid,
    pub em: ScoreGrid,
    pub catch_up: Vec<CatchUpEntry>,
    pub known: BTreeMap<String, f64>,
    pub cb: Vec<CBSeries>,
    pub coverage: Vec<CoveragePoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AnalyzeOptions {
    /// Compute Known rate and the CB series; requires closed-book rows.
    pub cb: bool,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        Self { cb: true }
    }
}

/// Analysis of score grids alone, e.g. fixture tables. Catch-up pairs
/// follow `tiers`; grids lacking an n = 1 baseline yield an error.
pub fn analyze_grids(
    dataset: &str,
    f1: ScoreGrid,
    em: ScoreGrid,
    tiers: &[String],
) -> Result<AnalysisReport> {
    let catch_up = catch_up_matrix(&f1, &em, tiers)?;
    Ok(AnalysisReport {
        dataset: dataset.to_owned(),
        order: None,
        tiers: tiers.to_vec(),
        f1,
        em,
        catch_up,
        known: BTreeMap::new(),
        cb: Vec::new(),
        coverage: Vec::new(),
    })
}

/// Grid restricted to the declared models and scales, so unrun cells show as holes.
fn declared_grid(
    records: &[GenerationRecord],
    qa: &[QAItem],
    metric: Metric,
    manifest: &RunManifest,
) -> Result<ScoreGrid> {
    let raw = score_grid(records, qa, metric, &manifest.dataset)?;
    let mut grid = ScoreGrid::new(
        metric,
        &manifest.dataset,
        manifest.tiers(),
        manifest.scales.clone(),
    );
    for m in manifest.tiers() {
        for &n in &manifest.scales {
            if let Some(v) = raw.get(n, &m) {
                grid.set(n, &m, v)?;
            }
        }
    }
    Ok(grid)
}

/// Analysis from in-memory records and bundles of one run.
pub fn analyze_records(
    manifest: &RunManifest,
    qa: &[QAItem],
    records: &[GenerationRecord],
    bundles: &BundleMap,
    opts: AnalyzeOptions,
) -> Result<AnalysisReport> {
    let records: Vec<GenerationRecord> = records
        .iter()
        .filter(|r| r.order == manifest.order)
        .cloned()
        .collect();
    let f1 = declared_grid(&records, qa, Metric::F1, manifest)?;
    let em = declared_grid(&records, qa, Metric::EM, manifest)?;
    let tiers = manifest.tiers();
    let catch_up = if manifest.scales.contains(&1) {
        catch_up_matrix(&f1, &em, &tiers)?
    } else {
        Vec::new()
    };

    let mut known = BTreeMap::new();
    let mut cb = Vec::new();
    if opts.cb {
        if !manifest.scales.contains(&0) {
            return Err(Error::Missing {
                what: "closed-book rows",
                name: format!("run {} has no n = 0 scale", manifest.run_id),
            });
        }
        for m in &tiers {
            known.insert(m.clone(), known_rate(&records, qa, m)?);
            cb.push(cb_series(&records, bundles, qa, m, &manifest.scales)?);
        }
    }

    let everyone: Vec<&QAItem> = qa.iter().collect();
    let coverage = manifest
        .scales
        .iter()
        .map(|&n| {
            Ok(CoveragePoint {
                n,
                coverage: coverage_rate(bundles, &everyone, n)?.unwrap_or(0.0),
            })
        })
        .collect::<Result<_>>()?;

    Ok(AnalysisReport {
        dataset: manifest.dataset.clone(),
        order: Some(manifest.order),
        tiers,
        f1,
        em,
        catch_up,
        known,
        cb,
        coverage,
    })
}

/// Analysis of a run directory from its persisted manifest, questions and log only.
pub fn analyze(run_dir: &Path, opts: AnalyzeOptions) -> Result<AnalysisReport> {
    let manifest = RunManifest::load(run_dir)?;
    let qa = load_qa_snapshot(run_dir, &manifest)?;
    let log = RunLog::read(&run_dir.join(LOG_FILE))?;
    analyze_records(&manifest, &qa, &log.records, &log.bundles, opts)
}
