// SPDX-License-Identifier: Apache-2.0

//! Deterministic report files.
//!
//! | file               | columns                                                        |
//! |--------------------|----------------------------------------------------------------|
//! | `scores_f1.csv`    | `n`, one column per model (empty cell = hole)                  |
//! | `scores_em.csv`    | same as above                                                  |
//! | `catch_up.csv`     | `small,large,n_star` (`none` when never caught up)             |
//! | `cb_series.csv`    | `model,n,cb,delta,coverage,coverage_all,ratio,known,empty_population` |
//! | `coverage.csv`     | `n,coverage`                                                   |
//! | `plot_*.csv`       | `x,y,series` triples                                           |
//! | `summary.txt`      | human-readable digest of the above                             |
//! | `analysis.json`    | the full report                                                |

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::analyze::AnalysisReport;
use crate::error::{Error, IoContext, Result};
use crate::metrics::ScoreGrid;

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map(|x| format!("{x:.digits$}")).unwrap_or_default()
}

fn csv_bytes(header: &[&str], rows: Vec<Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.into_inner()
        .map_err(|e| Error::Integrity(format!("csv buffer: {e}")))
}

fn grid_table(g: &ScoreGrid) -> Result<Vec<u8>> {
    let mut header = vec!["n"];
    header.extend(g.models().iter().map(String::as_str));
    let rows = g
        .scales()
        .iter()
        .map(|&n| {
            let mut row = vec![n.to_string()];
            row.extend(g.models().iter().map(|m| opt(g.get(n, m), 2)));
            row
        })
        .collect();
    csv_bytes(&header, rows)
}

fn grid_plot(g: &ScoreGrid) -> Result<Vec<u8>> {
    let mut rows = Vec::new();
    for m in g.models() {
        for &n in g.scales() {
            if let Some(v) = g.get(n, m) {
                rows.push(vec![n.to_string(), format!("{v:.2}"), m.clone()]);
            }
        }
    }
    csv_bytes(&["x", "y", "series"], rows)
}

fn summary(a: &AnalysisReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "dataset: {}", a.dataset);
    if let Some(order) = a.order {
        let _ = writeln!(s, "order: {order}");
    }
    let _ = writeln!(s, "models: {}", a.tiers.join(", "));
    let _ = writeln!(
        s,
        "grid: {} scales x {} models, {} holes",
        a.f1.scales().len(),
        a.f1.models().len(),
        a.f1.holes()
    );
    if !a.catch_up.is_empty() {
        let _ = writeln!(s, "\ncatch-up n*:");
        for c in &a.catch_up {
            let v = c.n_star.map_or("none".to_string(), |n| n.to_string());
            let _ = writeln!(s, "  {} -> {}: {v}", c.small, c.large);
        }
    }
    if !a.known.is_empty() {
        let _ = writeln!(s, "\nknown rate:");
        for (m, k) in &a.known {
            let _ = writeln!(s, "  {m}: {k:.4}");
        }
    }
    for series in &a.cb {
        if let Some(last) = series.points.last() {
            let _ = writeln!(
                s,
                "\n{}: CB@{} = {:.4}, coverage = {:.4}, ratio = {}",
                series.model_id,
                last.n,
                last.cb,
                last.coverage,
                last.ratio.map_or("undefined".to_string(), |r| format!("{r:.4}"))
            );
        }
    }
    s
}

/// Every report file as `(name, bytes)`, in a fixed order.
pub fn render_report(a: &AnalysisReport) -> Result<Vec<(&'static str, Vec<u8>)>> {
    let mut files = vec![
        ("scores_f1.csv", grid_table(&a.f1)?),
        ("scores_em.csv", grid_table(&a.em)?),
        ("plot_scores_f1.csv", grid_plot(&a.f1)?),
        ("plot_scores_em.csv", grid_plot(&a.em)?),
        (
            "catch_up.csv",
            csv_bytes(
                &["small", "large", "n_star"],
                a.catch_up
                    .iter()
                    .map(|c| {
                        vec![
                            c.small.clone(),
                            c.large.clone(),
                            c.n_star.map_or("none".into(), |n| n.to_string()),
                        ]
                    })
                    .collect(),
            )?,
        ),
    ];
    if !a.cb.is_empty() {
        let mut rows = Vec::new();
        let mut plot = Vec::new();
        for s in &a.cb {
            for p in &s.points {
                rows.push(vec![
                    s.model_id.clone(),
                    p.n.to_string(),
                    format!("{:.6}", p.cb),
                    opt(p.delta, 6),
                    format!("{:.6}", p.coverage),
                    format!("{:.6}", p.coverage_all),
                    opt(p.ratio, 6),
                    format!("{:.6}", s.known),
                    p.empty_population.to_string(),
                ]);
                plot.push(vec![p.n.to_string(), format!("{:.6}", p.cb), s.model_id.clone()]);
            }
        }
        files.push((
            "cb_series.csv",
            csv_bytes(
                &[
                    "model",
                    "n",
                    "cb",
                    "delta",
                    "coverage",
                    "coverage_all",
                    "ratio",
                    "known",
                    "empty_population",
                ],
                rows,
            )?,
        ));
        files.push(("plot_cb.csv", csv_bytes(&["x", "y", "series"], plot)?));
    }
    if !a.coverage.is_empty() {
        files.push((
            "coverage.csv",
            csv_bytes(
                &["n", "coverage"],
                a.coverage
                    .iter()
                    .map(|p| vec![p.n.to_string(), format!("{:.6}", p.coverage)])
                    .collect(),
            )?,
        ));
    }
    files.push(("summary.txt", summary(a).into_bytes()));
    files.push((
        "analysis.json",
        (serde_json::to_string_pretty(a)? + "\n").into_bytes(),
    ));
    Ok(files)
}

/// Writes the report under `out_dir`; returns the paths written.
pub fn report(a: &AnalysisReport, out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir).ctx(|| format!("creating {}", out_dir.display()))?;
    render_report(a)?
        .into_iter()
        .map(|(name, bytes)| {
            let path = out_dir.join(name);
            fs::write(&path, bytes).ctx(|| format!("writing {}", path.display()))?;
            Ok(path)
        })
        .collect()
}
