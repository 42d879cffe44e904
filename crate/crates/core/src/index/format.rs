// SPDX-License-Identifier: Apache-2.0

//! Binary layout of a persisted shard index (all integers little-endian):
//!
//! ```text
//! "RSIX" | version u8 | kind u8 | reserved u16
//! shard_index u32 | dims u32 | count u64 | id_width u32 | params_len u32
//! params (JSON object, params_len bytes)
//! count x [ doc_id (NUL-padded to id_width) | dims x f32 ]
//! approximate only:
//!   entry u32 | max_level u32
//!   count x [ levels u8 | levels x ( degree u32 | degree x u32 ) ]
//! ```

use std::collections::BTreeMap;

use super::hnsw::Graph;
use super::{IndexKind, ShardIndex};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"RSIX";
pub const VERSION: u8 = 1;

pub struct Header {
    pub kind: IndexKind,
    pub shard_index: usize,
    pub dims: usize,
    pub count: usize,
    pub id_width: usize,
    pub build_params: BTreeMap<String, String>,
    pub body_offset: usize,
}

pub fn encode(index: &ShardIndex) -> Vec<u8> {
    let id_width = index.doc_ids.iter().map(String::len).max().unwrap_or(0);
    let params = serde_json::to_vec(&index.build_params).expect("params serialize");
    let mut out = Vec::with_capacity(32 + params.len() + index.len() * (id_width + index.dims * 4));
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(match index.kind {
        IndexKind::Exact => 0,
        IndexKind::Approximate => 1,
    });
    out.extend_from_slice(&0u16.to_le_bytes());
    out.extend_from_slice(&(index.shard_index as u32).to_le_bytes());
    out.extend_from_slice(&(index.dims as u32).to_le_bytes());
    out.extend_from_slice(&(index.len() as u64).to_le_bytes());
    out.extend_from_slice(&(id_width as u32).to_le_bytes());
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    out.extend_from_slice(&params);
    for (id, v) in index.entries() {
        out.extend_from_slice(id.as_bytes());
        out.resize(out.len() + id_width - id.len(), 0);
        for x in v {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    if let Some(g) = &index.graph {
        out.extend_from_slice(&g.entry.to_le_bytes());
        out.extend_from_slice(&g.max_level.to_le_bytes());
        for layers in &g.links {
            out.push(layers.len() as u8);
            for adj in layers {
                out.extend_from_slice(&(adj.len() as u32).to_le_bytes());
                for n in adj {
                    out.extend_from_slice(&n.to_le_bytes());
                }
            }
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Integrity("index file is truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode_header(bytes: &[u8]) -> Result<Header> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Integrity("not a shard index file".into()));
    }
    let version = r.u8()?;
    if version != VERSION {
        return Err(Error::Integrity(format!("unsupported index version {version}")));
    }
    let kind = match r.u8()? {
        0 => IndexKind::Exact,
        1 => IndexKind::Approximate,
        k => return Err(Error::Integrity(format!("unknown index kind tag {k}"))),
    };
    r.take(2)?;
    let shard_index = r.u32()? as usize;
    let dims = r.u32()? as usize;
    let count = r.u64()? as usize;
    let id_width = r.u32()? as usize;
    let params_len = r.u32()? as usize;
    let build_params = serde_json::from_slice(r.take(params_len)?)?;
    Ok(Header {
        kind,
        shard_index,
        dims,
        count,
        id_width,
        build_params,
        body_offset: r.pos,
    })
}

pub fn decode(bytes: &[u8]) -> Result<ShardIndex> {
    let h = decode_header(bytes)?;
    if h.dims == 0 {
        return Err(Error::Integrity("index declares zero dims".into()));
    }
    let mut r = Reader {
        bytes,
        pos: h.body_offset,
    };
    let mut doc_ids = Vec::with_capacity(h.count);
    let mut vectors = Vec::with_capacity(h.count * h.dims);
    for _ in 0..h.count {
        let raw = r.take(h.id_width)?;
        let len = raw.iter().rposition(|&b| b != 0).map_or(0, |p| p + 1);
        let id =
            std::str::from_utf8(&raw[..len]).map_err(|_| Error::Integrity("doc_id is not UTF-8".into()))?;
        doc_ids.push(id.to_owned());
        for _ in 0..h.dims {
            vectors.push(f32::from_le_bytes(r.take(4)?.try_into().unwrap()));
        }
    }
    let graph = match h.kind {
        IndexKind::Exact => None,
        IndexKind::Approximate => {
            let entry = r.u32()?;
            let max_level = r.u32()?;
            let mut links = Vec::with_capacity(h.count);
            for _ in 0..h.count {
                let levels = r.u8()? as usize;
                let mut layers = Vec::with_capacity(levels);
                for _ in 0..levels {
                    let degree = r.u32()? as usize;
                    let mut adj = Vec::with_capacity(degree);
                    for _ in 0..degree {
                        let n = r.u32()?;
                        if n as usize >= h.count {
                            return Err(Error::Integrity("graph edge out of range".into()));
                        }
                        adj.push(n);
                    }
                    layers.push(adj);
                }
                links.push(layers);
            }
            Some(Graph {
                entry,
                max_level,
                links,
            })
        }
    };
    if r.pos != bytes.len() {
        return Err(Error::Integrity("trailing bytes after index body".into()));
    }
    Ok(ShardIndex {
        shard_index: h.shard_index,
        kind: h.kind,
        dims: h.dims,
        doc_ids,
        vectors,
        build_params: h.build_params,
        graph,
    })
}
