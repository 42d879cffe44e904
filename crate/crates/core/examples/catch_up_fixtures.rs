// SPDX-License-Identifier: Apache-2.0

//! Catch-up thresholds from the bundled reference score tables.

use ragscale::experiment::analyze_grids;
use ragscale::fixtures::{dataset_grids, tiers, DATASETS};

fn main() -> ragscale::Result<()> {
    for name in DATASETS {
        let (f1, em) = dataset_grids(name)?;
        let report = analyze_grids(name, f1, em, &tiers())?;
        for c in &report.catch_up {
            let n = c.n_star.map_or("never".to_string(), |n| n.to_string());
            println!("{name:<9} {:>5} reaches {:>4} at n = {n}", c.small, c.large);
        }
    }
    Ok(())
}
