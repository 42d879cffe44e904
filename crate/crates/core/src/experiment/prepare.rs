// SPDX-License-Identifier: Apache-2.0

//! Artifact preparation steps preceding a run: ingest, shard, index.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::config::ExperimentConfig;
use crate::corpus::{ingest_corpus, partition, Corpus, ShardPlan};
use crate::error::{Error, Result};
use crate::index::{build_index, IndexStore};

/// Reads newline-delimited document records from `input` into the store at `corpus_dir`.
pub fn ingest_file(input: &Path, corpus_dir: &Path) -> Result<Corpus> {
    let file = File::open(input).map_err(|_| Error::Missing {
        what: "document file",
        name: input.display().to_string(),
    })?;
    let corpus = ingest_corpus(BufReader::new(file))?;
    corpus.save(corpus_dir)?;
    Ok(corpus)
}

/// Partitions the stored corpus and writes the plan manifest to `plan_path`.
pub fn shard_corpus(corpus_dir: &Path, num_shards: usize, seed: u64, plan_path: &Path) -> Result<ShardPlan> {
    let corpus = Corpus::load(corpus_dir)?;
    let plan = partition(&corpus, num_shards, seed)?;
    plan.save(plan_path)?;
    Ok(plan)
}

/// Builds and stores one index per shard with the config's embedder and index
/// settings, using up to `threads` shards at a time.
pub fn build_shard_indices(cfg: &ExperimentConfig, threads: usize) -> Result<Vec<PathBuf>> {
    let corpus = Corpus::load(&cfg.corpus_dir)?;
    let plan = ShardPlan::load(&cfg.shard_plan, &corpus)?;
    let embedder = cfg.embedder.build(cfg.concurrency.embed)?;
    let store = IndexStore::new(&cfg.index_dir);
    let digest = plan.digest();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::Config(format!("index pool: {e}")))?;
    let built = pool.install(|| {
        (1..=plan.num_shards())
            .into_par_iter()
            .map(|s| {
                build_index(
                    &plan,
                    s,
                    &corpus,
                    embedder.as_ref(),
                    cfg.index.kind,
                    cfg.index.graph_params(),
                )
            })
            .collect::<Result<Vec<_>>>()
    })?;
    built.iter().map(|idx| store.save(&digest, idx)).collect()
}
