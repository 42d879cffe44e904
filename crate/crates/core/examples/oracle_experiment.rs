// SPDX-License-Identifier: Apache-2.0

//! End-to-end run on a planted-answer corpus with the oracle generator:
//! ingest, shard, index, execute the grid, analyze and write the report.
//!
//! Pass a directory to keep the outputs; defaults to a scratch dir.

use std::path::PathBuf;

use ragscale::experiment::{
    analyze, build_generators, build_shard_indices, execute, ingest_file, plan, report, shard_corpus,
    AnalyzeOptions, ExecuteOptions, ExperimentConfig, Workspace,
};
use ragscale::synthetic::{generate, SyntheticConfig};

const CONFIG: &str = r#"
run_id = "oracle-demo"
dataset = "synthetic"
corpus_dir = "corpus"
qa_path = "raw/qa.jsonl"
shard_plan = "plan.json"
index_dir = "indices"
run_dir = "run"

[[models]]
model_id = "oracle"
kind = "oracle"
"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join(format!("ragscale-oracle-{}", std::process::id())));
    let _ = std::fs::remove_dir_all(&root);

    let data = generate(&SyntheticConfig::default())?;
    let (docs, _) = data.write(&root.join("raw"))?;
    ingest_file(&docs, &root.join("corpus"))?;
    shard_corpus(&root.join("corpus"), 12, 1, &root.join("plan.json"))?;
    std::fs::write(root.join("experiment.toml"), CONFIG)?;
    let cfg = ExperimentConfig::load(&root.join("experiment.toml"))?;
    build_shard_indices(&cfg, 4)?;

    let ws = Workspace::load(&cfg)?;
    let manifest = plan(&cfg, &ws)?;
    let generators = build_generators(&manifest)?;
    let summary = execute(
        &manifest,
        &ws,
        &generators,
        &cfg.run_dir,
        ExecuteOptions::default(),
    )?;
    println!("{} cells, {} written", summary.total, summary.records_written);

    let analysis = analyze(&cfg.run_dir, AnalyzeOptions::default())?;
    let series = &analysis.cb[0];
    for p in &series.points {
        println!(
            "n={:>2}  CB {:.3}  coverage {:.3}  delta {:>7}",
            p.n,
            p.cb,
            p.coverage,
            p.delta.map_or("-".into(), |d| format!("{d:+.3}"))
        );
    }
    for path in report(&analysis, &root.join("report"))? {
        println!("wrote {}", path.display());
    }
    Ok(())
}
