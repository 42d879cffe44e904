// SPDX-License-Identifier: Apache-2.0

//! Partition a small corpus and show which shards each scale activates.

use ragscale::corpus::{active_shards, partition, ActiveScale, Corpus, Document};

fn main() -> ragscale::Result<()> {
    let docs = (0..23).map(|i| Document::new(format!("d{i:02}"), format!("document number {i}")));
    let corpus = Corpus::from_documents(docs)?;
    let plan = partition(&corpus, 5, 42)?;
    println!("sizes {:?}  digest {}", plan.shard_sizes(), &plan.digest()[..12]);
    for s in 1..=plan.num_shards() {
        println!("shard {s}: {:?}", plan.members(s)?);
    }
    for n in 0..=5 {
        let fwd = active_shards(&plan, ActiveScale::forward(n))?;
        let rev = active_shards(&plan, ActiveScale::reversed(n))?;
        println!("n={n}  forward {fwd:?}  reversed {rev:?}");
    }
    Ok(())
}
