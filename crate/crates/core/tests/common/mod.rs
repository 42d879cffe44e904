// SPDX-License-Identifier: Apache-2.0
#![allow(dead_code)]

pub mod stub;

use std::path::Path;

use ragscale::experiment::{build_shard_indices, ingest_file, shard_corpus, ExperimentConfig};
use ragscale::synthetic::{generate, SyntheticConfig, SyntheticDataset};
use tempfile::TempDir;

pub struct Setup {
    pub dir: TempDir,
    pub cfg: ExperimentConfig,
    pub data: SyntheticDataset,
}

pub struct SetupOptions {
    pub synthetic: SyntheticConfig,
    pub shards: usize,
    pub plan_seed: u64,
    /// Top-level keys, e.g. `scales = [0, 1]`.
    pub top: String,
    /// Tables appended to the generated config, e.g. `[[models]]`.
    pub extra: String,
}

impl Default for SetupOptions {
    fn default() -> Self {
        Self {
            synthetic: SyntheticConfig {
                documents: 160,
                questions: 24,
                ..SyntheticConfig::default()
            },
            shards: 4,
            plan_seed: 11,
            top: String::new(),
            extra: "[[models]]\nmodel_id = \"oracle\"\nkind = \"oracle\"\n".into(),
        }
    }
}

pub fn config_text(run_dir: &Path, top: &str, extra: &str) -> String {
    format!(
        r#"run_id = "test"
dataset = "synthetic"
corpus_dir = "corpus"
qa_path = "raw/qa.jsonl"
shard_plan = "plan.json"
index_dir = "indices"
run_dir = "{}"
{top}

[concurrency]
search = 2
embed = 2
generate = 3

{extra}"#,
        run_dir.display()
    )
}

/// Synthetic corpus ingested, sharded and indexed under a fresh temp dir.
pub fn setup(opts: SetupOptions) -> Setup {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let data = generate(&opts.synthetic).unwrap();
    let (docs, _) = data.write(&root.join("raw")).unwrap();
    ingest_file(&docs, &root.join("corpus")).unwrap();
    shard_corpus(
        &root.join("corpus"),
        opts.shards,
        opts.plan_seed,
        &root.join("plan.json"),
    )
    .unwrap();
    let text = config_text(&root.join("run"), &opts.top, &opts.extra);
    std::fs::write(root.join("experiment.toml"), &text).unwrap();
    let cfg = ExperimentConfig::load(&root.join("experiment.toml")).unwrap();
    build_shard_indices(&cfg, 2).unwrap();
    Setup { dir, cfg, data }
}
