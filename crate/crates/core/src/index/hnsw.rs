// SPDX-License-Identifier: Apache-2.0

//! Hierarchical navigable small-world graph over unit vectors, scored by
//! inner product. Construction is sequential in node order so that the same
//! inputs always produce the same graph.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::embed::dot;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GraphParams {
    /// Out-degree on upper layers; layer 0 allows twice this.
    pub m: usize,
    pub ef_construction: usize,
    pub ef_search: usize,
    pub seed: u64,
}

impl Default for GraphParams {
    fn default() -> Self {
        Self {
            m: 24,
            ef_construction: 200,
            ef_search: 256,
            seed: 0x5eed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    pub(crate) entry: u32,
    pub(crate) max_level: u32,
    /// `links[node][layer]` for layers `0..=level(node)`.
    pub(crate) links: Vec<Vec<Vec<u32>>>,
}

#[derive(Clone, Copy, PartialEq)]
struct Cand {
    sim: f32,
    id: u32,
}

impl Eq for Cand {}

impl Ord for Cand {
    // Higher similarity first; lower id wins ties.
    fn cmp(&self, other: &Self) -> Ordering {
        self.sim
            .total_cmp(&other.sim)
            .then_with(|| other.id.cmp(&self.id))
    }
}

impl PartialOrd for Cand {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct Visited {
    stamp: Vec<u32>,
    epoch: u32,
}

impl Visited {
    fn new(n: usize) -> Self {
        Self {
            stamp: vec![0; n],
            epoch: 0,
        }
    }

    fn reset(&mut self) {
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.stamp.iter_mut().for_each(|s| *s = 0);
            self.epoch = 1;
        }
    }

    /// Marks `id`; returns false if it was already marked this epoch.
    fn insert(&mut self, id: u32) -> bool {
        let s = &mut self.stamp[id as usize];
        if *s == self.epoch {
            false
        } else {
            *s = self.epoch;
            true
        }
    }
}

struct Builder<'a> {
    vectors: &'a [f32],
    dims: usize,
    params: GraphParams,
    graph: Graph,
    visited: Visited,
}

impl<'a> Builder<'a> {
    fn vec(&self, id: u32) -> &'a [f32] {
        let start = id as usize * self.dims;
        &self.vectors[start..start + self.dims]
    }

    fn max_degree(&self, layer: usize) -> usize {
        if layer == 0 {
            self.params.m * 2
        } else {
            self.params.m
        }
    }

    /// Keeps candidates that are closer to the base than to any already kept
    /// neighbor, then tops up with the best of the rest.
    fn select(&self, mut cands: Vec<Cand>, limit: usize) -> Vec<u32> {
        cands.sort_by(|a, b| b.cmp(a));
        let mut kept: Vec<Cand> = Vec::with_capacity(limit);
        let mut pruned = Vec::new();
        for c in cands {
            if kept.len() >= limit {
                break;
            }
            let cv = self.vec(c.id);
            if kept.iter().all(|k| dot(cv, self.vec(k.id)) < c.sim) {
                kept.push(c);
            } else {
                pruned.push(c);
            }
        }
        for c in pruned {
            if kept.len() >= limit {
                break;
            }
            kept.push(c);
        }
        kept.into_iter().map(|c| c.id).collect()
    }

    fn insert(&mut self, id: u32, level: usize) {
        self.graph.links.push(vec![Vec::new(); level + 1]);
        if id == 0 {
            self.graph.entry = 0;
            self.graph.max_level = level as u32;
            return;
        }
        let q = self.vec(id);
        let top = self.graph.max_level as usize;
        let mut ep = vec![Cand {
            sim: dot(q, self.vec(self.graph.entry)),
            id: self.graph.entry,
        }];
        for layer in (level + 1..=top).rev() {
            ep = search_layer(
                &self.graph,
                self.vectors,
                self.dims,
                q,
                &ep,
                1,
                layer,
                &mut self.visited,
            );
        }
        for layer in (0..=level.min(top)).rev() {
            let found = search_layer(
                &self.graph,
                self.vectors,
                self.dims,
                q,
                &ep,
                self.params.ef_construction,
                layer,
                &mut self.visited,
            );
            let neighbors = self.select(found.clone(), self.params.m);
            self.graph.links[id as usize][layer] = neighbors.clone();
            let cap = self.max_degree(layer);
            for n in neighbors {
                let mut list = std::mem::take(&mut self.graph.links[n as usize][layer]);
                list.push(id);
                if list.len() > cap {
                    let nv = self.vec(n);
                    let cands = list
                        .iter()
                        .map(|&o| Cand {
                            sim: dot(nv, self.vec(o)),
                            id: o,
                        })
                        .collect();
                    list = self.select(cands, cap);
                }
                self.graph.links[n as usize][layer] = list;
            }
            ep = found;
        }
        if level > top {
            self.graph.entry = id;
            self.graph.max_level = level as u32;
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn search_layer(
    graph: &Graph,
    vectors: &[f32],
    dims: usize,
    q: &[f32],
    entry: &[Cand],
    ef: usize,
    layer: usize,
    visited: &mut Visited,
) -> Vec<Cand> {
    visited.reset();
    let mut frontier: BinaryHeap<Cand> = BinaryHeap::new();
    // Min-heap of the best `ef` found so far.
    let mut best: BinaryHeap<std::cmp::Reverse<Cand>> = BinaryHeap::new();
    for &c in entry {
        if visited.insert(c.id) {
            frontier.push(c);
            best.push(std::cmp::Reverse(c));
        }
    }
    while best.len() > ef {
        best.pop();
    }
    while let Some(c) = frontier.pop() {
        let worst = best.peek().map(|r| r.0);
        if let Some(w) = worst {
            if best.len() >= ef && c < w {
                break;
            }
        }
        let Some(adj) = graph.links[c.id as usize].get(layer) else {
            continue;
        };
        for &n in adj {
            if !visited.insert(n) {
                continue;
            }
            let start = n as usize * dims;
            let cand = Cand {
                sim: dot(q, &vectors[start..start + dims]),
                id: n,
            };
            let admit = best.len() < ef || best.peek().is_some_and(|w| cand > w.0);
            if admit {
                frontier.push(cand);
                best.push(std::cmp::Reverse(cand));
                if best.len() > ef {
                    best.pop();
                }
            }
        }
    }
    let mut out: Vec<Cand> = best.into_iter().map(|r| r.0).collect();
    out.sort_by(|a, b| b.cmp(a));
    out
}

impl Graph {
    pub fn build(vectors: &[f32], dims: usize, params: GraphParams) -> Graph {
        let count = vectors.len() / dims.max(1);
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let level_mult = 1.0 / (params.m.max(2) as f64).ln();
        let mut b = Builder {
            vectors,
            dims,
            params,
            graph: Graph {
                entry: 0,
                max_level: 0,
                links: Vec::with_capacity(count),
            },
            visited: Visited::new(count),
        };
        for id in 0..count {
            let u: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
            let level = ((-u.ln()) * level_mult).floor().min(16.0) as usize;
            b.insert(id as u32, level);
        }
        b.graph
    }

    /// Approximate top candidates for `q`, best first, at most `ef` of them.
    pub fn search(&self, vectors: &[f32], dims: usize, q: &[f32], ef: usize) -> Vec<(u32, f32)> {
        if self.links.is_empty() {
            return Vec::new();
        }
        let mut visited = Visited::new(self.links.len());
        let mut ep = vec![Cand {
            sim: dot(q, &vectors[self.entry as usize * dims..][..dims]),
            id: self.entry,
        }];
        for layer in (1..=self.max_level as usize).rev() {
            ep = search_layer(self, vectors, dims, q, &ep, 1, layer, &mut visited);
        }
        search_layer(self, vectors, dims, q, &ep, ef.max(1), 0, &mut visited)
            .into_iter()
            .map(|c| (c.id, c.sim))
            .collect()
    }
}
