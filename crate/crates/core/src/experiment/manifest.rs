// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Sampling};
use super::log::LOG_FILE;
use crate::corpus::{active_shards, load_qa, parse_qa, ActiveScale, Corpus, QAItem, ShardOrder, ShardPlan};
use crate::digest::{sha256_hex, LineDigest};
use crate::embed::Embedder;
use crate::error::{Error, IoContext, Result};
use crate::generate::{prompt_template_digest, GeneratorSpec};
use crate::index::{IndexKind, IndexStore, ShardIndex};
use crate::retrieve::RetrievalParams;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const QA_SNAPSHOT_FILE: &str = "qa.jsonl";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShardPlanRef {
    pub seed: u64,
    pub num_shards: usize,
    pub digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub dataset: String,
    pub qa_digest: String,
    pub corpus_digest: String,
    pub shard_plan: ShardPlanRef,
    pub scales: Vec<usize>,
    pub order: ShardOrder,
    pub models: Vec<GeneratorSpec>,
    pub retrieval: RetrievalParams,
    pub index_kind: IndexKind,
    pub embedder: String,
    pub prompt_template_digest: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampling: Option<Sampling>,
    /// Seconds since the Unix epoch; excluded from the digest.
    pub created_at: u64,
}

/// One `(model, n)` cell of the full-factorial grid.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct GridCell {
    pub model_id: String,
    pub n: usize,
}

impl RunManifest {
    /// Content digest over every field except `created_at`.
    pub fn digest(&self) -> String {
        let mut canonical = self.clone();
        canonical.created_at = 0;
        sha256_hex(serde_json::to_vec(&canonical).expect("manifest serializes"))
    }

    pub fn cells(&self) -> Vec<GridCell> {
        self.models
            .iter()
            .flat_map(|m| {
                self.scales.iter().map(|&n| GridCell {
                    model_id: m.model_id.clone(),
                    n,
                })
            })
            .collect()
    }

    pub fn tiers(&self) -> Vec<String> {
        self.models.iter().map(|m| m.model_id.clone()).collect()
    }

    pub fn scale(&self, n: usize) -> ActiveScale {
        ActiveScale { n, order: self.order }
    }

    pub fn load(run_dir: &Path) -> Result<Self> {
        let path = run_dir.join(MANIFEST_FILE);
        let body = fs::read_to_string(&path).map_err(|_| Error::Missing {
            what: "run manifest",
            name: path.display().to_string(),
        })?;
        Ok(serde_json::from_str(&body)?)
    }

    fn save(&self, run_dir: &Path) -> Result<()> {
        let path = run_dir.join(MANIFEST_FILE);
        let body = serde_json::to_string_pretty(self)? + "\n";
        fs::write(&path, body).ctx(|| format!("writing {}", path.display()))
    }
}

/// Corpus, plan, questions, indices and embedder resolved from a config.
pub struct Workspace {
    pub corpus: Arc<Corpus>,
    pub plan: Arc<ShardPlan>,
    pub qa: Vec<QAItem>,
    pub indices: Arc<BTreeMap<usize, ShardIndex>>,
    pub embedder: Arc<dyn Embedder>,
}

fn sample(qa: Vec<QAItem>, sampling: Option<Sampling>) -> Result<Vec<QAItem>> {
    let Some(s) = sampling else { return Ok(qa) };
    if s.size > qa.len() {
        return Err(Error::Range {
            what: "sample size",
            value: s.size,
            min: 1,
            max: qa.len(),
        });
    }
    let mut picked: Vec<usize> = (0..qa.len()).collect();
    picked.shuffle(&mut ChaCha8Rng::seed_from_u64(s.seed));
    picked.truncate(s.size);
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| qa[i].clone()).collect())
}

fn qa_digest(qa: &[QAItem]) -> String {
    let mut d = LineDigest::new();
    for q in qa {
        d.line(serde_json::to_vec(q).expect("qa serializes"));
    }
    d.finish()
}

/// Shards touched by any scale of the run.
pub(crate) fn needed_shards(plan: &ShardPlan, scales: &[usize], order: ShardOrder) -> Result<Vec<usize>> {
    let mut out = std::collections::BTreeSet::new();
    for &n in scales {
        out.extend(active_shards(plan, ActiveScale { n, order })?);
    }
    Ok(out.into_iter().collect())
}

impl Workspace {
    /// Loads every artifact the config references; a missing one is named in the error.
    pub fn load(cfg: &ExperimentConfig) -> Result<Self> {
        let corpus = Corpus::load(&cfg.corpus_dir)?;
        let plan = ShardPlan::load(&cfg.shard_plan, &corpus)?;
        let qa = sample(load_qa(&cfg.qa_path)?, cfg.sampling)?;
        let scales = resolve_scales(cfg, plan.num_shards())?;
        let embedder = cfg.embedder.build(cfg.concurrency.embed)?;
        let store = IndexStore::new(&cfg.index_dir);
        let digest = plan.digest();
        let mut indices = BTreeMap::new();
        for s in needed_shards(&plan, &scales, cfg.order)? {
            let idx = store.load(&digest, s, cfg.index.kind)?;
            let built_with = idx.build_params().get("embedder").cloned().unwrap_or_default();
            if built_with != embedder.fingerprint() {
                return Err(Error::Integrity(format!(
                    "shard {s} index was built with `{built_with}`, config uses `{}`",
                    embedder.fingerprint()
                )));
            }
            indices.insert(s, idx);
        }
        Ok(Self {
            corpus: Arc::new(corpus),
            plan: Arc::new(plan),
            qa,
            indices: Arc::new(indices),
            embedder,
        })
    }
}

fn resolve_scales(cfg: &ExperimentConfig, num_shards: usize) -> Result<Vec<usize>> {
    let mut scales = cfg.scales.clone().unwrap_or_else(|| (0..=num_shards).collect());
    scales.sort_unstable();
    scales.dedup();
    if let Some(&bad) = scales.iter().find(|&&n| n > num_shards) {
        return Err(Error::Range {
            what: "corpus scale",
            value: bad,
            min: 0,
            max: num_shards,
        });
    }
    if scales.is_empty() {
        return Err(Error::Config("no scales to run".into()));
    }
    Ok(scales)
}

/// Builds the manifest for `cfg` against loaded artifacts, without touching disk.
pub fn build_manifest(cfg: &ExperimentConfig, ws: &Workspace) -> Result<RunManifest> {
    let scales = resolve_scales(cfg, ws.plan.num_shards())?;
    Ok(RunManifest {
        run_id: cfg.run_id.clone(),
        dataset: cfg.dataset.clone(),
        qa_digest: qa_digest(&ws.qa),
        corpus_digest: ws.corpus.digest(),
        shard_plan: ShardPlanRef {
            seed: ws.plan.seed(),
            num_shards: ws.plan.num_shards(),
            digest: ws.plan.digest(),
        },
        scales,
        order: cfg.order,
        models: cfg.models.clone(),
        retrieval: cfg.retrieval,
        index_kind: cfg.index.kind,
        embedder: ws.embedder.fingerprint(),
        prompt_template_digest: prompt_template_digest(),
        sampling: cfg.sampling,
        created_at: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    })
}

/// Plans a run: persists the manifest and the question snapshot under the run
/// directory before any work starts. Re-planning an existing run must produce
/// the same manifest once records exist.
pub fn plan(cfg: &ExperimentConfig, ws: &Workspace) -> Result<RunManifest> {
    let manifest = build_manifest(cfg, ws)?;
    let dir = &cfg.run_dir;
    fs::create_dir_all(dir).ctx(|| format!("creating {}", dir.display()))?;
    if dir.join(MANIFEST_FILE).exists() {
        let existing = RunManifest::load(dir)?;
        if existing.digest() == manifest.digest() {
            return Ok(existing);
        }
        let has_records = fs::metadata(dir.join(LOG_FILE))
            .map(|m| m.len() > 0)
            .unwrap_or(false);
        if has_records {
            return Err(Error::Integrity(format!(
                "run {} already has records under a different manifest",
                dir.display()
            )));
        }
    }
    write_qa_snapshot(dir, &ws.qa)?;
    manifest.save(dir)?;
    Ok(manifest)
}

fn write_qa_snapshot(dir: &Path, qa: &[QAItem]) -> Result<()> {
    let path = dir.join(QA_SNAPSHOT_FILE);
    let file = File::create(&path).ctx(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    for q in qa {
        serde_json::to_writer(&mut w, q)?;
        w.write_all(b"\n").ctx(|| format!("writing {}", path.display()))?;
    }
    w.flush().ctx(|| format!("writing {}", path.display()))
}

/// Questions the run was planned with, verified against the manifest digest.
pub fn load_qa_snapshot(run_dir: &Path, manifest: &RunManifest) -> Result<Vec<QAItem>> {
    let path = run_dir.join(QA_SNAPSHOT_FILE);
    let file = File::open(&path).map_err(|_| Error::Missing {
        what: "question snapshot",
        name: path.display().to_string(),
    })?;
    let qa = parse_qa(BufReader::new(file))?;
    if qa_digest(&qa) != manifest.qa_digest {
        return Err(Error::Integrity(format!(
            "{} does not match the manifest's question digest",
            path.display()
        )));
    }
    Ok(qa)
}
