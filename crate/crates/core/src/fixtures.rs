// SPDX-License-Identifier: Apache-2.0

//! Reference score tables for NQ, TriviaQA and WebQuestions, 12 scales by
//! five model tiers, bundled in the grid fixture format.

use crate::error::{Error, Result};
use crate::metrics::{read_grid_fixture, Metric, ScoreGrid};

pub const NQ: &str = include_str!("../fixtures/nq.csv");
pub const TRIVIAQA: &str = include_str!("../fixtures/triviaqa.csv");
pub const WEBQ: &str = include_str!("../fixtures/webq.csv");

/// Model tiers from smallest to largest.
pub const TIERS: [&str; 5] = ["0.6B", "1.7B", "4B", "8B", "14B"];

pub const DATASETS: [&str; 3] = ["nq", "triviaqa", "webq"];

pub fn raw(dataset: &str) -> Result<&'static str> {
    match dataset {
        "nq" => Ok(NQ),
        "triviaqa" => Ok(TRIVIAQA),
        "webq" => Ok(WEBQ),
        other => Err(Error::Missing {
            what: "fixture dataset",
            name: other.to_owned(),
        }),
    }
}

/// `(F1 grid, EM grid)` for one bundled dataset.
pub fn dataset_grids(dataset: &str) -> Result<(ScoreGrid, ScoreGrid)> {
    let grids = read_grid_fixture(raw(dataset)?.as_bytes())?;
    let pick = |m: Metric| {
        grids
            .iter()
            .find(|g| g.metric == m)
            .cloned()
            .ok_or_else(|| Error::Integrity(format!("fixture {dataset} lacks a {m} grid")))
    };
    Ok((pick(Metric::F1)?, pick(Metric::EM)?))
}

pub fn tiers() -> Vec<String> {
    TIERS.iter().map(|t| (*t).to_owned()).collect()
}
