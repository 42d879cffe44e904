// SPDX-License-Identifier: Apache-2.0

mod common;

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use common::{setup, Setup, SetupOptions};
use ragscale::corpus::{QAItem, ShardOrder};
use ragscale::experiment::{
    analyze, build_generators, execute, plan, AnalyzeOptions, ExecuteOptions, ExperimentConfig, RunLog,
    RunManifest, Workspace, LOCK_FILE, LOG_FILE,
};
use ragscale::generate::{Completion, Generator, OracleGenerator};
use ragscale::retrieve::EvidenceBundle;
use ragscale::Error;

fn run(s: &Setup) -> (RunManifest, ragscale::experiment::ExecuteSummary) {
    let ws = Workspace::load(&s.cfg).unwrap();
    let manifest = plan(&s.cfg, &ws).unwrap();
    let gens = build_generators(&manifest).unwrap();
    let summary = execute(&manifest, &ws, &gens, &s.cfg.run_dir, ExecuteOptions::default()).unwrap();
    (manifest, summary)
}

fn five_models() -> String {
    ["0.6B", "1.7B", "4B", "8B", "14B"]
        .iter()
        .map(|m| format!("[[models]]\nmodel_id = \"{m}\"\nkind = \"oracle\"\n"))
        .collect()
}

#[test]
fn plan_enumerates_full_factorial_grid() {
    let s = setup(SetupOptions {
        shards: 12,
        synthetic: ragscale::synthetic::SyntheticConfig {
            documents: 60,
            questions: 5,
            ..Default::default()
        },
        extra: five_models(),
        ..Default::default()
    });
    let ws = Workspace::load(&s.cfg).unwrap();
    let m = plan(&s.cfg, &ws).unwrap();
    assert_eq!(m.cells().len(), 65);
    assert_eq!(m.scales, (0..=12).collect::<Vec<_>>());
    assert!(s.cfg.run_dir.join("manifest.json").exists());

    let mut one = s.cfg.clone();
    one.models.truncate(1);
    one.scales = Some(vec![0, 1]);
    assert_eq!(plan(&one, &ws).unwrap().cells().len(), 2);

    let mut bad = s.cfg.clone();
    bad.scales = Some(vec![0, 13]);
    assert!(matches!(
        Workspace::load(&bad),
        Err(Error::Range { value: 13, .. })
    ));
}

#[test]
fn dangling_references_are_named() {
    let s = setup(SetupOptions::default());
    let mut cfg = s.cfg.clone();
    cfg.index_dir = s.dir.path().join("nowhere");
    match Workspace::load(&cfg) {
        Err(Error::Missing { what, .. }) => assert_eq!(what, "shard index"),
        Err(e) => panic!("unexpected error {e}"),
        Ok(_) => panic!("expected a missing index"),
    }
    let mut cfg = s.cfg.clone();
    cfg.qa_path = s.dir.path().join("missing.jsonl");
    assert!(Workspace::load(&cfg).is_err());
}

#[test]
fn oracle_run_completes_and_resumes_as_noop() {
    let s = setup(SetupOptions::default());
    let (manifest, summary) = run(&s);
    let cells = manifest.scales.len() * s.data.qa.len();
    assert_eq!(summary.total, cells);
    assert_eq!(summary.records_written, cells);
    assert!(summary.complete());

    let log = RunLog::read(&s.cfg.run_dir.join(LOG_FILE)).unwrap();
    assert_eq!(log.records.len(), cells);
    assert!(log
        .records
        .iter()
        .filter(|r| r.n == 0)
        .all(|r| r.abstained && r.bundle_digest.is_empty()));

    let before = fs::read(s.cfg.run_dir.join(LOG_FILE)).unwrap();
    let (_, again) = run(&s);
    assert_eq!(again.resumed, cells);
    assert_eq!(again.records_written + again.bundles_written, 0);
    assert_eq!(fs::read(s.cfg.run_dir.join(LOG_FILE)).unwrap(), before);
    assert!(!s.cfg.run_dir.join(LOCK_FILE).exists());
}

/// Oracle that panics once it has answered `limit` questions.
struct Crashing {
    inner: OracleGenerator,
    calls: AtomicUsize,
    limit: usize,
}

impl Generator for Crashing {
    fn model_id(&self) -> &str {
        self.inner.model_id()
    }
    fn complete(&self, qa: &QAItem, bundle: &EvidenceBundle) -> ragscale::Result<Completion> {
        if self.calls.fetch_add(1, Ordering::SeqCst) >= self.limit {
            panic!("injected crash");
        }
        self.inner.complete(qa, bundle)
    }
}

/// Oracle whose first call per odd-numbered question fails transiently.
struct Flaky {
    inner: OracleGenerator,
    failed: std::sync::Mutex<HashSet<(String, usize)>>,
}

impl Generator for Flaky {
    fn model_id(&self) -> &str {
        self.inner.model_id()
    }
    fn complete(&self, qa: &QAItem, bundle: &EvidenceBundle) -> ragscale::Result<Completion> {
        let odd = qa.query_id.ends_with(['1', '3', '5', '7', '9']);
        if odd
            && self
                .failed
                .lock()
                .unwrap()
                .insert((qa.query_id.clone(), bundle.n))
        {
            return Err(Error::Transport {
                attempts: 4,
                message: "503 from stub".into(),
            });
        }
        self.inner.complete(qa, bundle)
    }
}

fn gens(g: Arc<dyn Generator>) -> BTreeMap<String, Arc<dyn Generator>> {
    BTreeMap::from([("oracle".to_string(), g)])
}

#[test]
fn crash_then_resume_has_no_duplicates() {
    let s = setup(SetupOptions::default());
    let ws = Workspace::load(&s.cfg).unwrap();
    let manifest = plan(&s.cfg, &ws).unwrap();
    let total = manifest.scales.len() * s.data.qa.len();
    let crashing = Arc::new(Crashing {
        inner: OracleGenerator::new("oracle"),
        calls: AtomicUsize::new(0),
        limit: total / 2,
    });
    let opts = ExecuteOptions {
        flush_every: 7,
        ..Default::default()
    };
    let err = execute(&manifest, &ws, &gens(crashing), &s.cfg.run_dir, opts).unwrap_err();
    assert!(err.to_string().contains("panicked"), "{err}");
    assert!(!s.cfg.run_dir.join(LOCK_FILE).exists());
    let partial = RunLog::read(&s.cfg.run_dir.join(LOG_FILE)).unwrap().records.len();
    assert!(partial > 0 && partial < total, "{partial}");

    let summary = execute(
        &manifest,
        &ws,
        &gens(Arc::new(OracleGenerator::new("oracle"))),
        &s.cfg.run_dir,
        opts,
    )
    .unwrap();
    assert_eq!(summary.resumed, partial);
    assert!(summary.complete());
    let log = RunLog::read(&s.cfg.run_dir.join(LOG_FILE)).unwrap();
    assert_eq!(log.records.len(), total);
    let keys: HashSet<_> = log.records.iter().map(|r| (r.query_id.clone(), r.n)).collect();
    assert_eq!(keys.len(), total);
}

#[test]
fn transient_failures_are_logged_and_retried() {
    let s = setup(SetupOptions::default());
    let ws = Workspace::load(&s.cfg).unwrap();
    let manifest = plan(&s.cfg, &ws).unwrap();
    let flaky: Arc<dyn Generator> = Arc::new(Flaky {
        inner: OracleGenerator::new("oracle"),
        failed: Default::default(),
    });
    let first = execute(
        &manifest,
        &ws,
        &gens(flaky.clone()),
        &s.cfg.run_dir,
        ExecuteOptions::default(),
    )
    .unwrap();
    assert!(first.failed > 0);
    assert!(!first.complete());
    let second = execute(
        &manifest,
        &ws,
        &gens(flaky),
        &s.cfg.run_dir,
        ExecuteOptions::default(),
    )
    .unwrap();
    assert_eq!(second.records_written, first.failed);
    assert!(second.complete());
    let log = RunLog::read(&s.cfg.run_dir.join(LOG_FILE)).unwrap();
    assert_eq!(log.failures.len(), first.failed);
    assert!(log.failures[0].error.contains("503"));
}

#[test]
fn torn_tail_is_recovered_on_resume() {
    let s = setup(SetupOptions::default());
    let (_, summary) = run(&s);
    let path = s.cfg.run_dir.join(LOG_FILE);
    let bytes = fs::read(&path).unwrap();
    // Cut into the middle of the final flush.
    let cut = bytes.len() - 40;
    fs::write(&path, &bytes[..cut]).unwrap();
    let torn = RunLog::read(&path).unwrap();
    assert!(torn.records.len() < summary.total);
    assert!(torn.discarded_len > 0);

    let (_, resumed) = run(&s);
    assert!(resumed.complete());
    let log = RunLog::read(&path).unwrap();
    assert_eq!(log.records.len(), summary.total);
    assert_eq!(log.discarded_len, 0);
}

#[test]
fn corrupt_line_fails_fast_with_line_number() {
    let s = setup(SetupOptions::default());
    run(&s);
    let path = s.cfg.run_dir.join(LOG_FILE);
    let text = fs::read_to_string(&path).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines[4] = "garbage";
    fs::write(&path, lines.join("\n") + "\n").unwrap();
    let ws = Workspace::load(&s.cfg).unwrap();
    let manifest = RunManifest::load(&s.cfg.run_dir).unwrap();
    let gens = build_generators(&manifest).unwrap();
    match execute(&manifest, &ws, &gens, &s.cfg.run_dir, ExecuteOptions::default()) {
        Err(Error::CorruptLog { line, .. }) => assert_eq!(line, 5),
        other => panic!("expected corrupt log, got {other:?}"),
    }
}

#[test]
fn concurrent_execute_is_locked_out() {
    let s = setup(SetupOptions::default());
    let ws = Workspace::load(&s.cfg).unwrap();
    let manifest = plan(&s.cfg, &ws).unwrap();
    fs::write(s.cfg.run_dir.join(LOCK_FILE), "1").unwrap();
    let gens = build_generators(&manifest).unwrap();
    assert!(matches!(
        execute(&manifest, &ws, &gens, &s.cfg.run_dir, ExecuteOptions::default()),
        Err(Error::Locked(_))
    ));
}

fn normalized_records(cfg: &ExperimentConfig) -> Vec<String> {
    let log = RunLog::read(&cfg.run_dir.join(LOG_FILE)).unwrap();
    let mut out: Vec<String> = log
        .records
        .into_iter()
        .map(|mut r| {
            r.latency_ms = 0;
            serde_json::to_string(&r).unwrap()
        })
        .collect();
    out.extend(log.bundles.values().map(|b| serde_json::to_string(b).unwrap()));
    out
}

#[test]
fn identical_runs_produce_identical_logs() {
    let a = setup(SetupOptions::default());
    let b = setup(SetupOptions::default());
    run(&a);
    run(&b);
    assert_eq!(normalized_records(&a.cfg), normalized_records(&b.cfg));
}

#[test]
fn manifest_is_immutable_once_records_exist() {
    let s = setup(SetupOptions::default());
    run(&s);
    let mut changed = s.cfg.clone();
    changed.retrieval.k = 5;
    let ws = Workspace::load(&changed).unwrap();
    assert!(matches!(plan(&changed, &ws), Err(Error::Integrity(_))));
    // The unchanged config re-plans to the same manifest.
    let ws = Workspace::load(&s.cfg).unwrap();
    let m = plan(&s.cfg, &ws).unwrap();
    assert_eq!(m, RunManifest::load(&s.cfg.run_dir).unwrap());
}

#[test]
fn analysis_uses_only_persisted_data() {
    let s = setup(SetupOptions::default());
    run(&s);
    fs::remove_dir_all(s.dir.path().join("indices")).unwrap();
    fs::remove_dir_all(s.dir.path().join("corpus")).unwrap();
    fs::remove_dir_all(s.dir.path().join("raw")).unwrap();
    let report = analyze(&s.cfg.run_dir, AnalyzeOptions::default()).unwrap();
    let series = &report.cb[0];
    assert_eq!(series.point(0).unwrap().cb, 0.0);
    for p in &series.points {
        assert!(
            p.cb <= p.coverage + 1e-12,
            "n={} cb={} coverage={}",
            p.n,
            p.cb,
            p.coverage
        );
    }
    assert_eq!(report.known["oracle"], 0.0);
    assert_eq!(report.f1.models(), ["oracle".to_string()]);
    assert!(report.catch_up.is_empty());
}

#[test]
fn cb_analysis_requires_closed_book_rows() {
    let s = setup(SetupOptions {
        top: "scales = [1, 2]".into(),
        ..Default::default()
    });
    run(&s);
    assert!(matches!(
        analyze(&s.cfg.run_dir, AnalyzeOptions::default()),
        Err(Error::Missing {
            what: "closed-book rows",
            ..
        })
    ));
    let grids_only = analyze(&s.cfg.run_dir, AnalyzeOptions { cb: false }).unwrap();
    assert_eq!(grids_only.f1.scales(), [1, 2]);
}

#[test]
fn forward_and_reversed_agree_at_full_scale() {
    let fwd = setup(SetupOptions {
        top: "scales = [4]".into(),
        ..Default::default()
    });
    let rev = setup(SetupOptions {
        top: "scales = [4]\norder = \"reversed\"".into(),
        ..Default::default()
    });
    run(&fwd);
    run(&rev);
    let chunks = |s: &Setup| {
        RunLog::read(&s.cfg.run_dir.join(LOG_FILE))
            .unwrap()
            .bundles
            .into_values()
            .map(|b| (b.query_id, b.chunks))
            .collect::<Vec<_>>()
    };
    assert_eq!(chunks(&fwd), chunks(&rev));
    let rev_log = RunLog::read(&rev.cfg.run_dir.join(LOG_FILE)).unwrap();
    assert!(rev_log.records.iter().all(|r| r.order == ShardOrder::Reversed));
}
