// SPDX-License-Identifier: Apache-2.0

//! Full-factorial `(n, model)` runs: planning, resumable execution,
//! analysis and report emission.

mod analyze;
mod config;
mod execute;
mod log;
mod manifest;
mod prepare;
mod report;

pub use analyze::{analyze, analyze_grids, analyze_records, AnalysisReport, AnalyzeOptions, CoveragePoint};
pub use config::{Concurrency, EmbedderConfig, EmbedderKind, ExperimentConfig, IndexConfig, Sampling};
pub use execute::{build_generators, execute, ExecuteOptions, ExecuteSummary};
pub use log::{CellFailure, LogEntry, LogWriter, RunLock, RunLog, LOCK_FILE, LOG_FILE};
pub use manifest::{
    build_manifest, load_qa_snapshot, plan, GridCell, RunManifest, ShardPlanRef, Workspace, MANIFEST_FILE,
    QA_SNAPSHOT_FILE,
};
pub use prepare::{build_shard_indices, ingest_file, shard_corpus};
pub use report::{render_report, report};
