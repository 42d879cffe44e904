// SPDX-License-Identifier: Apache-2.0

//! Append-only run log. Each line is one JSON entry; a checkpoint line closes
//! every flush with the count and SHA-256 of the entries since the previous
//! checkpoint. Entries after the last checkpoint belong to a flush that never
//! completed and are discarded on read.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::ShardOrder;
use crate::error::{Error, IoContext, Result};
use crate::generate::GenerationRecord;
use crate::metrics::BundleMap;
use crate::retrieve::EvidenceBundle;

pub const LOG_FILE: &str = "log.jsonl";
pub const LOCK_FILE: &str = ".lock";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellFailure {
    pub query_id: String,
    /// Empty when retrieval itself failed.
    pub model_id: String,
    pub n: usize,
    pub order: ShardOrder,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum LogEntry {
    Bundle { digest: String, bundle: EvidenceBundle },
    Record { record: GenerationRecord },
    Failure { failure: CellFailure },
    Checkpoint { entries: usize, sha256: String },
}

/// Committed contents of a run log.
#[derive(Debug, Clone, Default)]
pub struct RunLog {
    pub bundles: BundleMap,
    pub records: Vec<GenerationRecord>,
    pub failures: Vec<CellFailure>,
    /// Byte length of the committed prefix.
    pub committed_len: u64,
    /// Bytes past the committed prefix (torn or unflushed tail).
    pub discarded_len: u64,
}

type RecordKey = (String, String, usize, ShardOrder);

impl RunLog {
    pub fn read(path: &Path) -> Result<Self> {
        let bytes = match fs::read(path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Self::default()),
            Err(e) => return Err(Error::io(format!("reading {}", path.display()), e)),
        };
        Self::parse(path, &bytes)
    }

    fn parse(path: &Path, bytes: &[u8]) -> Result<Self> {
        let corrupt = |line: usize, reason: String| Error::CorruptLog {
            path: path.to_path_buf(),
            line,
            reason,
        };
        let mut log = RunLog::default();
        let mut pending: Vec<(usize, LogEntry)> = Vec::new();
        let mut hasher = Sha256::new();
        let mut seen: HashMap<RecordKey, ()> = HashMap::new();
        let mut offset = 0usize;
        let mut line_no = 0usize;
        while offset < bytes.len() {
            line_no += 1;
            let Some(rel) = bytes[offset..].iter().position(|&b| b == b'\n') else {
                break; // torn final line
            };
            let raw = &bytes[offset..offset + rel + 1];
            let is_last = offset + rel + 1 == bytes.len();
            let entry: LogEntry = match serde_json::from_slice(&raw[..raw.len() - 1]) {
                Ok(e) => e,
                Err(_) if is_last => break,
                Err(e) => return Err(corrupt(line_no, e.to_string())),
            };
            offset += raw.len();
            match entry {
                LogEntry::Checkpoint { entries, sha256 } => {
                    let actual = hex::encode(std::mem::take(&mut hasher).finalize());
                    if entries != pending.len() || sha256 != actual {
                        return Err(corrupt(
                            line_no,
                            format!(
                                "checkpoint covers {entries} entries / {sha256}, found {} / {actual}",
                                pending.len()
                            ),
                        ));
                    }
                    for (at, e) in pending.drain(..) {
                        log.commit(e, &mut seen).map_err(|reason| corrupt(at, reason))?;
                    }
                    log.committed_len = offset as u64;
                }
                other => {
                    hasher.update(raw);
                    pending.push((line_no, other));
                }
            }
        }
        log.discarded_len = bytes.len() as u64 - log.committed_len;
        Ok(log)
    }

    fn commit(
        &mut self,
        entry: LogEntry,
        seen: &mut HashMap<RecordKey, ()>,
    ) -> std::result::Result<(), String> {
        match entry {
            LogEntry::Bundle { digest, bundle } => {
                if bundle.digest() != digest {
                    return Err("bundle content does not match its digest".into());
                }
                self.bundles.insert((bundle.query_id.clone(), bundle.n), bundle);
            }
            LogEntry::Record { record } => {
                let key = (
                    record.query_id.clone(),
                    record.model_id.clone(),
                    record.n,
                    record.order,
                );
                if seen.insert(key, ()).is_some() {
                    return Err(format!(
                        "duplicate record for ({}, {}, {})",
                        record.query_id, record.model_id, record.n
                    ));
                }
                self.records.push(record);
            }
            LogEntry::Failure { failure } => self.failures.push(failure),
            LogEntry::Checkpoint { .. } => unreachable!("handled by caller"),
        }
        Ok(())
    }

    /// Bundles by digest, for joining records to their evidence.
    pub fn bundles_by_digest(&self) -> BTreeMap<String, &EvidenceBundle> {
        self.bundles.values().map(|b| (b.digest(), b)).collect()
    }
}

/// Buffered appender that writes a checkpoint line on every flush.
pub struct LogWriter {
    path: PathBuf,
    out: BufWriter<File>,
    pending: usize,
    hasher: Sha256,
    flush_every: usize,
}

impl LogWriter {
    /// Opens `path` for appending after truncating it to `committed_len`.
    pub fn open(path: &Path, committed_len: u64, flush_every: usize) -> Result<Self> {
        let file = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(path)
            .ctx(|| format!("opening {}", path.display()))?;
        file.set_len(committed_len)
            .ctx(|| format!("truncating {}", path.display()))?;
        drop(file);
        let file = OpenOptions::new()
            .append(true)
            .open(path)
            .ctx(|| format!("opening {}", path.display()))?;
        Ok(Self {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
            pending: 0,
            hasher: Sha256::new(),
            flush_every: flush_every.max(1),
        })
    }

    pub fn append(&mut self, entry: &LogEntry) -> Result<()> {
        let mut line = serde_json::to_vec(entry)?;
        line.push(b'\n');
        self.hasher.update(&line);
        self.out
            .write_all(&line)
            .ctx(|| format!("writing {}", self.path.display()))?;
        self.pending += 1;
        if self.pending >= self.flush_every {
            self.flush()?;
        }
        Ok(())
    }

    /// Writes a checkpoint for pending entries and flushes to disk.
    pub fn flush(&mut self) -> Result<()> {
        if self.pending == 0 {
            return Ok(());
        }
        let sha256 = hex::encode(std::mem::take(&mut self.hasher).finalize());
        let mut line = serde_json::to_vec(&LogEntry::Checkpoint {
            entries: self.pending,
            sha256,
        })?;
        line.push(b'\n');
        self.out
            .write_all(&line)
            .ctx(|| format!("writing {}", self.path.display()))?;
        self.out
            .flush()
            .ctx(|| format!("flushing {}", self.path.display()))?;
        self.out
            .get_ref()
            .sync_data()
            .ctx(|| format!("syncing {}", self.path.display()))?;
        self.pending = 0;
        Ok(())
    }
}

/// Exclusive claim on a run directory, released on drop.
pub struct RunLock {
    path: PathBuf,
}

impl RunLock {
    /// Takes the run directory's lock. A lock left behind by a process that
    /// no longer exists is reclaimed.
    pub fn acquire(run_dir: &Path) -> Result<Self> {
        let path = run_dir.join(LOCK_FILE);
        for _ in 0..2 {
            match OpenOptions::new().write(true).create_new(true).open(&path) {
                Ok(mut f) => {
                    let _ = writeln!(f, "{}", std::process::id());
                    return Ok(Self { path });
                }
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                    if !holder_is_gone(&path) {
                        return Err(Error::Locked(path));
                    }
                    let _ = fs::remove_file(&path);
                }
                Err(e) => return Err(Error::io(format!("creating {}", path.display()), e)),
            }
        }
        Err(Error::Locked(path))
    }
}

/// True only when the recorded holder pid is known to be dead. Without a
/// process table to consult the lock is assumed live.
fn holder_is_gone(lock: &Path) -> bool {
    let Ok(text) = fs::read_to_string(lock) else {
        return false;
    };
    let Ok(pid) = text.trim().parse::<u32>() else {
        return false;
    };
    let proc = Path::new("/proc");
    pid != std::process::id() && proc.join("self").exists() && !proc.join(pid.to_string()).exists()
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}
