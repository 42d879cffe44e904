// SPDX-License-Identifier: Apache-2.0

use std::collections::{BTreeMap, HashSet};
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{mpsc, Arc};
use std::thread;

use super::config::Concurrency;
use super::log::{CellFailure, LogEntry, LogWriter, RunLock, RunLog, LOG_FILE};
use super::manifest::{load_qa_snapshot, RunManifest, Workspace};
use crate::corpus::{QAItem, ShardOrder};
use crate::error::{Error, Result};
use crate::generate::{build_generator, generate, GenerationRecord, Generator};
use crate::retrieve::{EvidenceBundle, Retriever};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExecuteOptions {
    pub concurrency: Concurrency,
    /// Entries per checkpointed flush.
    pub flush_every: usize,
}

impl Default for ExecuteOptions {
    fn default() -> Self {
        Self {
            concurrency: Concurrency::default(),
            flush_every: 32,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ExecuteSummary {
    /// `(query, model, n)` cells in the full grid.
    pub total: usize,
    /// Cells already complete before this invocation.
    pub resumed: usize,
    pub bundles_written: usize,
    pub records_written: usize,
    /// Cells left incomplete by a transient failure.
    pub failed: usize,
}

impl ExecuteSummary {
    pub fn complete(&self) -> bool {
        self.resumed + self.records_written == self.total
    }
}

/// One generator per model of the manifest, built from its specs.
pub fn build_generators(manifest: &RunManifest) -> Result<BTreeMap<String, Arc<dyn Generator>>> {
    manifest
        .models
        .iter()
        .map(|spec| Ok((spec.model_id.clone(), build_generator(spec)?)))
        .collect()
}

fn panic_message(payload: &(dyn std::any::Any + Send)) -> String {
    payload
        .downcast_ref::<&str>()
        .map(|s| (*s).to_owned())
        .or_else(|| payload.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "non-string panic payload".into())
}

/// Runs `work` over `tasks` on `workers` threads and hands results to `sink`
/// in task order. A panicking task or failing sink stops the pool; results
/// sunk before that point stay sunk.
fn run_ordered<T, R, W, S>(tasks: &[T], workers: usize, work: W, mut sink: S) -> Result<()>
where
    T: Sync,
    R: Send,
    W: Fn(&T) -> R + Sync,
    S: FnMut(R) -> Result<()>,
{
    let next = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let (tx, rx) = mpsc::channel::<(usize, std::result::Result<R, String>)>();
    let mut failure: Option<Error> = None;
    thread::scope(|scope| {
        for _ in 0..workers.max(1).min(tasks.len().max(1)) {
            let tx = tx.clone();
            let (next, abort, work) = (&next, &abort, &work);
            scope.spawn(move || loop {
                if abort.load(Ordering::SeqCst) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= tasks.len() {
                    break;
                }
                match panic::catch_unwind(AssertUnwindSafe(|| work(&tasks[i]))) {
                    Ok(r) => {
                        if tx.send((i, Ok(r))).is_err() {
                            break;
                        }
                    }
                    Err(payload) => {
                        abort.store(true, Ordering::SeqCst);
                        let _ = tx.send((i, Err(panic_message(payload.as_ref()))));
                        break;
                    }
                }
            });
        }
        drop(tx);
        let mut buffer: BTreeMap<usize, R> = BTreeMap::new();
        let mut expected = 0usize;
        for (i, outcome) in rx {
            match outcome {
                Ok(r) => {
                    buffer.insert(i, r);
                }
                Err(msg) => {
                    failure.get_or_insert(Error::Contract(format!("worker panicked on task {i}: {msg}")));
                }
            }
            if failure.is_some() {
                continue;
            }
            while let Some(r) = buffer.remove(&expected) {
                expected += 1;
                if let Err(e) = sink(r) {
                    abort.store(true, Ordering::SeqCst);
                    failure = Some(e);
                    break;
                }
            }
        }
    });
    failure.map_or(Ok(()), Err)
}

type RecordKey = (String, String, usize, ShardOrder);

fn key_of(r: &GenerationRecord) -> RecordKey {
    (r.query_id.clone(), r.model_id.clone(), r.n, r.order)
}

enum CellOutcome<T> {
    Done(T),
    Failed(CellFailure),
}

fn check_workspace(manifest: &RunManifest, ws: &Workspace) -> Result<()> {
    let checks = [
        ("corpus", manifest.corpus_digest.as_str(), ws.corpus.digest()),
        (
            "shard plan",
            manifest.shard_plan.digest.as_str(),
            ws.plan.digest(),
        ),
        ("embedder", manifest.embedder.as_str(), ws.embedder.fingerprint()),
    ];
    for (what, expected, actual) in checks {
        if expected != actual {
            return Err(Error::Integrity(format!(
                "{what} does not match the run manifest ({actual} vs {expected})"
            )));
        }
    }
    Ok(())
}

/// Executes every `(query, model, n)` cell of `manifest` not already in the
/// run log. Transient failures are logged per cell and retried next time.
pub fn execute(
    manifest: &RunManifest,
    ws: &Workspace,
    generators: &BTreeMap<String, Arc<dyn Generator>>,
    run_dir: &Path,
    opts: ExecuteOptions,
) -> Result<ExecuteSummary> {
    let _lock = RunLock::acquire(run_dir)?;
    let on_disk = RunManifest::load(run_dir)?;
    let run_digest = manifest.digest();
    if on_disk.digest() != run_digest {
        return Err(Error::Integrity(
            "run directory holds a different manifest".into(),
        ));
    }
    check_workspace(manifest, ws)?;
    let qa = load_qa_snapshot(run_dir, manifest)?;
    for m in &manifest.models {
        if !generators.contains_key(&m.model_id) {
            return Err(Error::Missing {
                what: "generator",
                name: m.model_id.clone(),
            });
        }
    }

    let log_path = run_dir.join(LOG_FILE);
    let log = RunLog::read(&log_path)?;
    if let Some(r) = log.records.iter().find(|r| r.run_digest != run_digest) {
        return Err(Error::Integrity(format!(
            "record for {} belongs to run {}",
            r.query_id, r.run_digest
        )));
    }
    let done: HashSet<RecordKey> = log.records.iter().map(key_of).collect();
    let mut bundles = log.bundles;
    let mut writer = LogWriter::open(&log_path, log.committed_len, opts.flush_every)?;
    let mut summary = ExecuteSummary {
        total: manifest.models.len() * manifest.scales.len() * qa.len(),
        ..Default::default()
    };

    let outcome = run_phases(
        manifest,
        ws,
        generators,
        &qa,
        &done,
        &mut bundles,
        &mut writer,
        &mut summary,
        opts,
        &run_digest,
    );
    let flushed = writer.flush();
    outcome?;
    flushed?;
    Ok(summary)
}

#[allow(clippy::too_many_arguments)]
fn run_phases(
    manifest: &RunManifest,
    ws: &Workspace,
    generators: &BTreeMap<String, Arc<dyn Generator>>,
    qa: &[QAItem],
    done: &HashSet<RecordKey>,
    bundles: &mut crate::metrics::BundleMap,
    writer: &mut LogWriter,
    summary: &mut ExecuteSummary,
    opts: ExecuteOptions,
    run_digest: &str,
) -> Result<()> {
    let order = manifest.order;

    // Evidence for every (query, n >= 1) not yet logged.
    let retrieval: Vec<(&QAItem, usize)> = manifest
        .scales
        .iter()
        .filter(|&&n| n > 0)
        .flat_map(|&n| qa.iter().map(move |q| (q, n)))
        .filter(|(q, n)| !bundles.contains_key(&(q.query_id.clone(), *n)))
        .collect();
    if !retrieval.is_empty() {
        let retriever = Retriever::new(
            ws.plan.clone(),
            ws.corpus.clone(),
            ws.indices.clone(),
            ws.embedder.clone(),
            manifest.retrieval,
        )?
        .with_search_concurrency(opts.concurrency.search)?;
        run_ordered(
            &retrieval,
            opts.concurrency.embed,
            |(q, n)| match retriever.evidence(q, manifest.scale(*n)) {
                Ok(b) => Ok(CellOutcome::Done(b)),
                Err(e) if e.is_transient() => Ok(CellOutcome::Failed(CellFailure {
                    query_id: q.query_id.clone(),
                    model_id: String::new(),
                    n: *n,
                    order,
                    error: e.to_string(),
                })),
                Err(e) => Err(e),
            },
            |res: Result<CellOutcome<EvidenceBundle>>| {
                match res? {
                    CellOutcome::Done(bundle) => {
                        writer.append(&LogEntry::Bundle {
                            digest: bundle.digest(),
                            bundle: bundle.clone(),
                        })?;
                        summary.bundles_written += 1;
                        bundles.insert((bundle.query_id.clone(), bundle.n), bundle);
                    }
                    CellOutcome::Failed(failure) => writer.append(&LogEntry::Failure { failure })?,
                }
                Ok(())
            },
        )?;
    }

    // Generation cells, model-major in declared order.
    let mut cells: Vec<(&str, &QAItem, EvidenceBundle)> = Vec::new();
    for spec in &manifest.models {
        for &n in &manifest.scales {
            for q in qa {
                let key = (q.query_id.clone(), spec.model_id.clone(), n, order);
                if done.contains(&key) {
                    summary.resumed += 1;
                    continue;
                }
                let bundle = if n == 0 {
                    EvidenceBundle::closed_book(&q.query_id, order)
                } else {
                    match bundles.get(&(q.query_id.clone(), n)) {
                        Some(b) => b.clone(),
                        None => {
                            summary.failed += 1;
                            continue;
                        }
                    }
                };
                cells.push((spec.model_id.as_str(), q, bundle));
            }
        }
    }
    run_ordered(
        &cells,
        opts.concurrency.generate,
        |(model, q, bundle)| match generate(generators[*model].as_ref(), q, bundle, run_digest) {
            Ok(r) => Ok(CellOutcome::Done(r)),
            Err(e) if e.is_transient() => Ok(CellOutcome::Failed(CellFailure {
                query_id: q.query_id.clone(),
                model_id: (*model).to_owned(),
                n: bundle.n,
                order,
                error: e.to_string(),
            })),
            Err(e) => Err(e),
        },
        |res: Result<CellOutcome<GenerationRecord>>| match res? {
            CellOutcome::Done(record) => {
                writer.append(&LogEntry::Record { record })?;
                summary.records_written += 1;
                Ok(())
            }
            CellOutcome::Failed(failure) => {
                writer.append(&LogEntry::Failure { failure })?;
                summary.failed += 1;
                Ok(())
            }
        },
    )
}
