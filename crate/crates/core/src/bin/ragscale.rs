// SPDX-License-Identifier: Apache-2.0

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use ragscale::corpus::{ActiveScale, QAItem, ShardOrder};
use ragscale::experiment::{
    analyze, analyze_grids, build_generators, build_shard_indices, execute, ingest_file, plan, report,
    shard_corpus, AnalysisReport, AnalyzeOptions, ExecuteOptions, ExperimentConfig, RunManifest, Workspace,
};
use ragscale::fixtures;
use ragscale::retrieve::Retriever;

#[derive(Parser)]
#[command(
    name = "ragscale",
    version,
    about = "Corpus-scaling experiments for retrieval-augmented generation"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Experiment config (TOML).
    #[arg(long, global = true, env = "RAGSCALE_CONFIG")]
    config: Option<PathBuf>,
    /// Overrides the config's run directory.
    #[arg(long, global = true)]
    run_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    search_concurrency: Option<usize>,
    #[arg(long, global = true)]
    embed_concurrency: Option<usize>,
    #[arg(long, global = true)]
    generate_concurrency: Option<usize>,
    /// Partition seed for `shard`.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Validate newline-delimited documents and write the document store.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Partition the document store into balanced random shards.
    Shard {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = 12)]
        shards: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build one index per shard with the configured embedder.
    Index {
        #[arg(long, default_value_t = 4)]
        threads: usize,
    },
    /// Retrieve evidence for a single question (debugging aid).
    Retrieve {
        #[arg(long)]
        question: String,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value = "forward")]
        order: ShardOrder,
    },
    /// Plan and execute the configured grid, resuming any previous progress.
    Run,
    /// Analyze a run directory and store `analysis.json` in it.
    Analyze {
        /// Skip Known / CB metrics (for runs without closed-book rows).
        #[arg(long)]
        no_cb: bool,
    },
    /// Emit tables, plot data and a summary from a stored analysis.
    Report {
        #[arg(long)]
        out: PathBuf,
    },
    /// Analyze the bundled reference score tables.
    Fixtures {
        /// `nq`, `triviaqa`, `webq` or `all`.
        #[arg(long, default_value = "all")]
        dataset: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

impl Global {
    fn config(&self) -> Result<ExperimentConfig> {
        let path = self
            .config
            .as_deref()
            .context("--config is required for this command")?;
        let mut cfg = ExperimentConfig::load(path)?;
        if let Some(dir) = &self.run_dir {
            cfg.run_dir = dir.clone();
        }
        let c = &mut cfg.concurrency;
        c.search = self.search_concurrency.unwrap_or(c.search);
        c.embed = self.embed_concurrency.unwrap_or(c.embed);
        c.generate = self.generate_concurrency.unwrap_or(c.generate);
        cfg.validate()?;
        Ok(cfg)
    }

    fn run_dir(&self) -> Result<PathBuf> {
        match &self.run_dir {
            Some(d) => Ok(d.clone()),
            None => Ok(self.config()?.run_dir),
        }
    }
}

const ANALYSIS_FILE: &str = "analysis.json";

fn print_catch_up(a: &AnalysisReport) {
    for c in &a.catch_up {
        let v = c.n_star.map_or("none".to_string(), |n| n.to_string());
        println!("{}\t{} -> {}\t{v}", a.dataset, c.small, c.large);
    }
}

fn load_analysis(run_dir: &Path) -> Result<AnalysisReport> {
    let path = run_dir.join(ANALYSIS_FILE);
    let body = std::fs::read_to_string(&path)
        .with_context(|| format!("{} not found; run `analyze` first", path.display()))?;
    Ok(serde_json::from_str(&body)?)
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let g = &cli.global;
    match &cli.command {
        Command::Ingest { input, corpus } => {
            let c = ingest_file(input, corpus)?;
            println!("ingested {} documents, digest {}", c.len(), c.digest());
        }
        Command::Shard { corpus, shards, out } => {
            let p = shard_corpus(corpus, *shards, g.seed.unwrap_or(0), out)?;
            println!(
                "{} shards, sizes {:?}, plan {}",
                p.num_shards(),
                p.shard_sizes(),
                p.digest()
            );
        }
        Command::Index { threads } => {
            let cfg = g.config()?;
            for path in build_shard_indices(&cfg, *threads)? {
                println!("{}", path.display());
            }
        }
        Command::Retrieve { question, n, order } => {
            let cfg = g.config()?;
            let ws = Workspace::load(&cfg)?;
            let retriever = Retriever::new(ws.plan, ws.corpus, ws.indices, ws.embedder, cfg.retrieval)?
                .with_search_concurrency(cfg.concurrency.search)?;
            let qa = QAItem::new("cli", question.as_str(), ["-"]);
            let bundle = retriever.evidence(&qa, ActiveScale { n: *n, order: *order })?;
            println!("{}", serde_json::to_string_pretty(&bundle)?);
        }
        Command::Run => {
            let cfg = g.config()?;
            let ws = Workspace::load(&cfg)?;
            let manifest = plan(&cfg, &ws)?;
            let generators = build_generators(&manifest)?;
            let opts = ExecuteOptions {
                concurrency: cfg.concurrency,
                ..Default::default()
            };
            let s = execute(&manifest, &ws, &generators, &cfg.run_dir, opts)?;
            println!(
                "{} cells: {} resumed, {} written, {} failed",
                s.total, s.resumed, s.records_written, s.failed
            );
            if !s.complete() {
                bail!(
                    "{} cells incomplete; re-run to retry",
                    s.total - s.resumed - s.records_written
                );
            }
        }
        Command::Analyze { no_cb } => {
            let dir = g.run_dir()?;
            let a = analyze(&dir, AnalyzeOptions { cb: !no_cb })?;
            std::fs::write(dir.join(ANALYSIS_FILE), serde_json::to_string_pretty(&a)? + "\n")?;
            let m = RunManifest::load(&dir)?;
            println!("run {} ({} cells)", m.run_id, m.cells().len());
            print_catch_up(&a);
        }
        Command::Report { out } => {
            let a = load_analysis(&g.run_dir()?)?;
            for p in report(&a, out)? {
                println!("{}", p.display());
            }
        }
        Command::Fixtures { dataset, out } => {
            let names: Vec<&str> = if dataset == "all" {
                fixtures::DATASETS.to_vec()
            } else {
                vec![dataset.as_str()]
            };
            for name in names {
                let (f1, em) = fixtures::dataset_grids(name)?;
                let a = analyze_grids(name, f1, em, &fixtures::tiers())?;
                print_catch_up(&a);
                if let Some(out) = out {
                    report(&a, &out.join(name))?;
                }
            }
        }
    }
    Ok(())
}
