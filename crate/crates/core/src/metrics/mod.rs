// SPDX-License-Identifier: Apache-2.0

//! Answer scoring, score grids, catch-up thresholds and the closed-book
//! baseline metrics.

mod answer;
mod cb;
mod grid;

pub use answer::{contains_tokens, coverage_hit, exact_match, f1, find_alias, normalize_answer};
pub use cb::{
    cb_at, cb_delta, cb_series, coverage_rate, known_rate, utilization_ratio, BundleMap, CBSeries, CbPoint,
    CbValue,
};
pub use grid::{
    catch_up, catch_up_matrix, read_grid_fixture, score_grid, write_grid_fixture, CatchUpEntry, Metric,
    ScoreGrid,
};
