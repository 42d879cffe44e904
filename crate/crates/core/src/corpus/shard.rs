// SPDX-License-Identifier: Apache-2.0

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Corpus;
use crate::digest::{sha256_hex, LineDigest};
use crate::error::{Error, IoContext, Result};

/// Balanced random partition of a corpus into `num_shards` disjoint shards.
///
/// Shards are 1-indexed. The assignment is a pure function of the corpus
/// doc_id set, the seed, and the shard count.
#[derive(Debug, Clone)]
pub struct ShardPlan {
    seed: u64,
    shards: Vec<Vec<String>>,
    assignment: HashMap<String, usize>,
    ordering_digest: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShardOrder {
    #[default]
    Forward,
    Reversed,
}

impl fmt::Display for ShardOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ShardOrder::Forward => "forward",
            ShardOrder::Reversed => "reversed",
        })
    }
}

impl FromStr for ShardOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "forward" | "fwd" => Ok(ShardOrder::Forward),
            "reversed" | "reverse" | "rev" => Ok(ShardOrder::Reversed),
            other => Err(Error::Config(format!("unknown shard order `{other}`"))),
        }
    }
}

/// Corpus scale: `n` active shards taken in `order`. `n = 0` is closed-book.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActiveScale {
    pub n: usize,
    pub order: ShardOrder,
}

impl ActiveScale {
    pub fn forward(n: usize) -> Self {
        Self {
            n,
            order: ShardOrder::Forward,
        }
    }

    pub fn reversed(n: usize) -> Self {
        Self {
            n,
            order: ShardOrder::Reversed,
        }
    }

    pub fn is_closed_book(&self) -> bool {
        self.n == 0
    }
}

/// On-disk description of a plan. The assignment itself is recomputed from
/// the corpus and seed, then checked against `ordering_digest`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShardPlanManifest {
    pub seed: u64,
    pub num_shards: usize,
    pub corpus_size: usize,
    pub shard_sizes: Vec<usize>,
    pub ordering_digest: String,
}

impl ShardPlanManifest {
    /// Digest naming this plan, used to key index directories.
    pub fn digest(&self) -> String {
        sha256_hex(serde_json::to_vec(self).expect("manifest serializes"))
    }
}

pub fn partition(corpus: &Corpus, num_shards: usize, seed: u64) -> Result<ShardPlan> {
    if corpus.is_empty() {
        return Err(Error::Contract("cannot partition an empty corpus".into()));
    }
    if num_shards < 1 || num_shards > corpus.len() {
        return Err(Error::Range {
            what: "shard count",
            value: num_shards,
            min: 1,
            max: corpus.len(),
        });
    }

    // Corpus iterates in sorted doc_id order.
    let mut ids: Vec<String> = corpus.doc_ids().map(str::to_owned).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);

    let mut ordering = LineDigest::new();
    for id in &ids {
        ordering.line(id);
    }

    let base = ids.len() / num_shards;
    let extra = ids.len() % num_shards;
    let mut shards = Vec::with_capacity(num_shards);
    let mut assignment = HashMap::with_capacity(ids.len());
    let mut rest = ids.into_iter();
    for shard in 0..num_shards {
        let size = base + usize::from(shard < extra);
        let members: Vec<String> = rest.by_ref().take(size).collect();
        for id in &members {
            assignment.insert(id.clone(), shard + 1);
        }
        shards.push(members);
    }

    Ok(ShardPlan {
        seed,
        shards,
        assignment,
        ordering_digest: ordering.finish(),
    })
}

impl ShardPlan {
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn num_shards(&self) -> usize {
        self.shards.len()
    }

    pub fn shard_sizes(&self) -> Vec<usize> {
        self.shards.iter().map(Vec::len).collect()
    }

    pub fn corpus_size(&self) -> usize {
        self.assignment.len()
    }

    /// 1-based shard holding `doc_id`.
    pub fn shard_of(&self, doc_id: &str) -> Option<usize> {
        self.assignment.get(doc_id).copied()
    }

    /// Members of shard `shard_index` (1-based) in shuffled order.
    pub fn members(&self, shard_index: usize) -> Result<&[String]> {
        self.check_shard(shard_index)?;
        Ok(&self.shards[shard_index - 1])
    }

    pub fn check_shard(&self, shard_index: usize) -> Result<()> {
        if shard_index < 1 || shard_index > self.shards.len() {
            return Err(Error::Range {
                what: "shard index",
                value: shard_index,
                min: 1,
                max: self.shards.len(),
            });
        }
        Ok(())
    }

    pub fn manifest(&self) -> ShardPlanManifest {
        ShardPlanManifest {
            seed: self.seed,
            num_shards: self.num_shards(),
            corpus_size: self.corpus_size(),
            shard_sizes: self.shard_sizes(),
            ordering_digest: self.ordering_digest.clone(),
        }
    }

    pub fn digest(&self) -> String {
        self.manifest().digest()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let body = serde_json::to_string_pretty(&self.manifest())?;
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).ctx(|| format!("creating {}", parent.display()))?;
        }
        fs::write(path, body + "\n").ctx(|| format!("writing {}", path.display()))
    }

    /// Recomputes the plan from `corpus` and verifies it against the manifest at `path`.
    pub fn load(path: &Path, corpus: &Corpus) -> Result<Self> {
        let manifest = read_plan_manifest(path)?;
        let plan = partition(corpus, manifest.num_shards, manifest.seed)?;
        if plan.manifest() != manifest {
            return Err(Error::Integrity(format!(
                "shard plan {} does not match the corpus it is loaded against",
                path.display()
            )));
        }
        Ok(plan)
    }
}

pub fn read_plan_manifest(path: &Path) -> Result<ShardPlanManifest> {
    let body = fs::read_to_string(path).map_err(|_| Error::Missing {
        what: "shard plan",
        name: path.display().to_string(),
    })?;
    Ok(serde_json::from_str(&body)?)
}

/// Resolves a scale to its 1-based shard indices.
pub fn active_shards(plan: &ShardPlan, scale: ActiveScale) -> Result<Vec<usize>> {
    let total = plan.num_shards();
    if scale.n > total {
        return Err(Error::Range {
            what: "corpus scale",
            value: scale.n,
            min: 0,
            max: total,
        });
    }
    Ok(match scale.order {
        ShardOrder::Forward => (1..=scale.n).collect(),
        ShardOrder::Reversed => (total - scale.n + 1..=total).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Document;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn corpus_of(size: usize) -> Corpus {
        Corpus::from_documents((0..size).map(|i| Document::new(format!("d{i:05}"), "t"))).unwrap()
    }

    fn check_plan(corpus: &Corpus, plan: &ShardPlan) {
        let mut seen = HashSet::new();
        for s in 1..=plan.num_shards() {
            for id in plan.members(s).unwrap() {
                assert!(seen.insert(id.clone()), "{id} assigned twice");
                assert_eq!(plan.shard_of(id), Some(s));
            }
        }
        let all: HashSet<String> = corpus.doc_ids().map(str::to_owned).collect();
        assert_eq!(seen, all);
        let sizes = plan.shard_sizes();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }

    #[test]
    fn single_shard_holds_everything() {
        let c = corpus_of(17);
        let plan = partition(&c, 1, 7).unwrap();
        assert_eq!(plan.shard_sizes(), vec![17]);
        check_plan(&c, &plan);
    }

    #[test]
    fn ten_docs_three_shards() {
        let c = corpus_of(10);
        let plan = partition(&c, 3, 42).unwrap();
        assert_eq!(plan.shard_sizes(), vec![4, 3, 3]);
        check_plan(&c, &plan);
    }

    #[test]
    fn paper_scale_sizes() {
        // 264M docs over 12 shards; the block arithmetic alone.
        let total: usize = 264_000_000;
        let n = 12;
        let sizes: Vec<usize> = (0..n).map(|s| total / n + usize::from(s < total % n)).collect();
        assert!(sizes.iter().all(|&s| s == 22_000_000));
        assert_eq!(sizes.iter().sum::<usize>(), total);
    }

    #[test]
    fn remainder_goes_to_lowest_shards() {
        let c = corpus_of(29);
        let plan = partition(&c, 4, 1).unwrap();
        assert_eq!(plan.shard_sizes(), vec![8, 7, 7, 7]);
    }

    #[test]
    fn too_many_shards_or_zero() {
        let c = corpus_of(5);
        assert!(matches!(partition(&c, 6, 0), Err(Error::Range { .. })));
        assert!(matches!(partition(&c, 0, 0), Err(Error::Range { .. })));
        assert!(partition(&Corpus::new(), 1, 0).is_err());
    }

    #[test]
    fn active_shard_lists() {
        let c = corpus_of(24);
        let plan = partition(&c, 12, 3).unwrap();
        assert_eq!(active_shards(&plan, ActiveScale::forward(2)).unwrap(), vec![1, 2]);
        assert_eq!(
            active_shards(&plan, ActiveScale::reversed(2)).unwrap(),
            vec![11, 12]
        );
        let all: Vec<usize> = (1..=12).collect();
        assert_eq!(active_shards(&plan, ActiveScale::forward(12)).unwrap(), all);
        assert_eq!(active_shards(&plan, ActiveScale::reversed(12)).unwrap(), all);
        assert!(active_shards(&plan, ActiveScale::forward(0)).unwrap().is_empty());
        assert!(matches!(
            active_shards(&plan, ActiveScale::forward(13)),
            Err(Error::Range { .. })
        ));
    }

    #[test]
    fn manifest_round_trip_and_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let c = corpus_of(50);
        let plan = partition(&c, 5, 9).unwrap();
        let path = dir.path().join("plan.json");
        plan.save(&path).unwrap();
        let back = ShardPlan::load(&path, &c).unwrap();
        assert_eq!(back.digest(), plan.digest());
        assert!(matches!(
            ShardPlan::load(&path, &corpus_of(51)),
            Err(Error::Integrity(_))
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn partition_invariants(size in 1usize..400, shards in 1usize..40, seed: u64) {
            prop_assume!(shards <= size);
            let c = corpus_of(size);
            let a = partition(&c, shards, seed).unwrap();
            let b = partition(&c, shards, seed).unwrap();
            check_plan(&c, &a);
            prop_assert_eq!(a.manifest(), b.manifest());
        }

        #[test]
        fn prefix_monotone(total in 1usize..20, n in 0usize..19) {
            prop_assume!(n < total);
            let c = corpus_of(total);
            let plan = partition(&c, total, 0).unwrap();
            for order in [ShardOrder::Forward, ShardOrder::Reversed] {
                let small: HashSet<_> = active_shards(&plan, ActiveScale { n, order }).unwrap().into_iter().collect();
                let big: HashSet<_> = active_shards(&plan, ActiveScale { n: n + 1, order }).unwrap().into_iter().collect();
                prop_assert!(small.is_subset(&big));
                prop_assert_eq!(big.len(), n + 1);
            }
        }
    }
}
