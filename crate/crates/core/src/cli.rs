//! Command-line surface. `main.rs` only parses arguments and reports errors;
//! everything else lives here so it can be driven from tests.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::config::EngineConfig;
use crate::dataset::{self, IngestReport, IntentCatalogEntry};
use crate::embedstore::Passage;
use crate::error::{Error, Result};
use crate::eval::{self, EvalReport, LabelSet, ZeroSupport};
use crate::pipeline::{self, Engine, ExecutionMode, RunManifest};

#[derive(Debug, Parser)]
#[command(
    name = "adaptive-tor",
    version,
    about = "Adaptive Tree-of-Retrieval engine and benchmark harness"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Engine configuration file (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Sequential node expansion and synthetic latency, for byte-stable traces.
    #[arg(long, global = true)]
    pub deterministic: bool,
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = ModeArg::Adaptive)]
    pub mode: ModeArg,
    /// Output file; stdout when absent.
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Adaptive,
    Fixed3,
    Standard,
}

impl From<ModeArg> for ExecutionMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Adaptive => ExecutionMode::Adaptive,
            ModeArg::Fixed3 => ExecutionMode::FixedDepth3,
            ModeArg::Standard => ExecutionMode::StandardRag,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ZeroSupportArg {
    One,
    Exclude,
}

#[derive(Debug, Args)]
pub struct CorpusArgs {
    /// Query file (JSON Lines: id, text, intents, domain).
    #[arg(long, value_name = "PATH")]
    pub dataset: PathBuf,
    /// Intent catalog (JSON Lines: name, description, examples). Derived from
    /// the dataset when absent.
    #[arg(long, value_name = "PATH")]
    pub catalog: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ingest a dataset, build the knowledge base and index it; writes a manifest.
    Index(CorpusArgs),
    /// Show the routing decision and signal breakdown for one query.
    Route {
        text: String,
        /// Corpus for the assessor's context snippets (optional).
        #[arg(long, value_name = "PATH")]
        dataset: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        catalog: Option<PathBuf>,
    },
    /// Run a workload and write one trace per query.
    Run(CorpusArgs),
    /// Score a trace file against the dataset's gold intents.
    Eval {
        #[arg(long, value_name = "PATH")]
        traces: PathBuf,
        #[command(flatten)]
        corpus: CorpusArgs,
        /// Report label; defaults to the trace mode.
        #[arg(long)]
        label: Option<String>,
        #[arg(long, value_enum, default_value_t = ZeroSupportArg::One)]
        zero_support: ZeroSupportArg,
    },
    /// Pareto frontier over evaluation reports.
    Pareto {
        #[arg(required = true, value_name = "REPORT")]
        reports: Vec<PathBuf>,
        /// Metric to maximize (repeatable).
        #[arg(long = "accuracy", default_values_t = vec!["micro_f1".to_owned()])]
        accuracy: Vec<String>,
        /// Metric to minimize (repeatable).
        #[arg(long = "cost", default_values_t = vec!["mean_latency_ms".to_owned()])]
        cost: Vec<String>,
    },
    /// Print the effective configuration (defaults, file, environment and flags merged).
    Config,
    /// Write a seeded synthetic workload and its intent catalog.
    Synth {
        #[arg(long, default_value_t = 200)]
        n: usize,
        #[arg(long, value_name = "PATH")]
        catalog_out: Option<PathBuf>,
    },
}

/// Single-line error record for stderr.
pub fn error_record(kind: &str, message: &str) -> String {
    json!({ "error": { "kind": kind, "message": message } }).to_string()
}

pub fn load_config(global: &GlobalArgs) -> Result<EngineConfig> {
    let mut cfg = match &global.config {
        Some(p) => EngineConfig::load(p)?,
        None => EngineConfig::default(),
    };
    cfg.apply_env();
    if let Some(s) = global.seed {
        cfg.seed = s;
    }
    if global.deterministic {
        cfg.deterministic = true;
    }
    if let Some(j) = global.jobs {
        cfg.jobs = j;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn emit(out: &mut dyn Write, path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, bytes).map_err(|e| Error::io(p, e)),
        None => out.write_all(bytes).map_err(|e| Error::io("<stdout>", e)),
    }
}

fn pretty<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(value)?;
    v.push(b'\n');
    Ok(v)
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

struct Corpus {
    report: IngestReport,
    catalog: Option<Vec<IntentCatalogEntry>>,
    passages: Vec<Passage>,
}

fn load_corpus(dataset: &Path, catalog: Option<&Path>) -> Result<Corpus> {
    let report = dataset::ingest(dataset)?;
    let catalog = catalog.map(dataset::load_catalog).transpose()?;
    let passages = dataset::build_kb(&report.records, catalog.as_deref());
    Ok(Corpus {
        report,
        catalog,
        passages,
    })
}

fn catalog_names(c: &Corpus) -> Vec<String> {
    match &c.catalog {
        Some(entries) => entries.iter().map(|e| e.name.clone()).collect(),
        None => dataset::derive_catalog(&c.report.records)
            .into_iter()
            .map(|e| e.name)
            .collect(),
    }
}

fn engine_for(cfg: &EngineConfig, corpus: &Corpus) -> Result<Engine> {
    Ok(Engine::from_config(cfg.clone(), corpus.passages.clone())?
        .with_catalog(catalog_names(corpus)))
}

#[derive(Debug, Serialize)]
struct IndexManifest {
    records: usize,
    dropped_unlabeled: usize,
    dropped_duplicates: usize,
    mean_intents: f64,
    passages: usize,
    dimension: usize,
    config_hash: String,
    corpus_hash: String,
}

pub fn execute(cli: Cli, out: &mut dyn Write) -> Result<()> {
    let cfg = load_config(&cli.global)?;
    let out_path = cli.global.out.as_deref();
    match cli.command {
        Command::Index(c) => {
            let corpus = load_corpus(&c.dataset, c.catalog.as_deref())?;
            let engine = engine_for(&cfg, &corpus)?;
            let corpus_hash = hex::encode(Sha256::digest(serde_json::to_vec(&corpus.passages)?));
            let manifest = IndexManifest {
                records: corpus.report.records.len(),
                dropped_unlabeled: corpus.report.dropped_unlabeled,
                dropped_duplicates: corpus.report.dropped_duplicates,
                mean_intents: corpus.report.mean_intents(),
                passages: engine.store().len(),
                dimension: engine.store().dimension(),
                config_hash: cfg.hash(),
                corpus_hash,
            };
            emit(out, out_path, &pretty(&manifest)?)
        }
        Command::Route {
            text,
            dataset,
            catalog,
        } => {
            let passages = match &dataset {
                Some(d) => load_corpus(d, catalog.as_deref())?.passages,
                None => Vec::new(),
            };
            let engine = Engine::from_config(cfg, passages)?;
            let (decision, ledger) = engine.route("route", &text)?;
            let tokens = crate::lingsig::tokenize(&text).tokens;
            let record = json!({
                "query": text,
                "tokens": tokens,
                "decision": decision,
                "ledger": ledger,
            });
            emit(out, out_path, &pretty(&record)?)
        }
        Command::Run(c) => {
            let corpus = load_corpus(&c.dataset, c.catalog.as_deref())?;
            let engine = engine_for(&cfg, &corpus)?;
            let mode = ExecutionMode::from(cli.global.mode);
            let started = pipeline::unix_ms();
            let traces = engine.run_workload(&corpus.report.records, mode);
            let failed = traces.iter().filter(|t| t.failed()).count();
            emit(out, out_path, &pipeline::traces_to_jsonl(&traces)?)?;
            if let Some(p) = out_path {
                let manifest = RunManifest {
                    mode,
                    config_hash: cfg.hash(),
                    seed: cfg.seed,
                    deterministic: cfg.deterministic,
                    queries: traces.len(),
                    failed,
                    started_unix_ms: started,
                    finished_unix_ms: pipeline::unix_ms(),
                };
                let mp = sibling(p, ".manifest.json");
                std::fs::write(&mp, pretty(&manifest)?).map_err(|e| Error::io(&mp, e))?;
            }
            if failed > 0 {
                log::warn!("{failed} of {} queries failed", traces.len());
            }
            Ok(())
        }
        Command::Eval {
            traces,
            corpus,
            label,
            zero_support,
        } => {
            let ts = pipeline::read_traces(&traces)?;
            let c = load_corpus(&corpus.dataset, corpus.catalog.as_deref())?;
            let golds: BTreeMap<String, LabelSet> = c
                .report
                .records
                .iter()
                .map(|r| (r.id.clone(), r.intents.clone()))
                .collect();
            let label = label
                .or_else(|| ts.first().map(|t| t.execution.to_string()))
                .unwrap_or_else(|| "run".into());
            let zero = match zero_support {
                ZeroSupportArg::One => ZeroSupport::One,
                ZeroSupportArg::Exclude => ZeroSupport::Exclude,
            };
            let report = eval::evaluate(&label, &ts, &golds, &catalog_names(&c), zero)?;
            emit(out, out_path, &pretty(&report)?)?;
            if let (Some(p), Some(depth)) = (out_path, &report.depth) {
                let cp = sibling(p, ".csv");
                std::fs::write(&cp, depth.to_csv()).map_err(|e| Error::io(&cp, e))?;
            }
            Ok(())
        }
        Command::Pareto {
            reports,
            accuracy,
            cost,
        } => {
            let points = reports
                .iter()
                .map(|p| {
                    let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                    let r: EvalReport = serde_json::from_str(&text)?;
                    r.point(&accuracy, &cost)
                })
                .collect::<Result<Vec<_>>>()?;
            let report = eval::frontier_report(points)?;
            emit(out, out_path, &pretty(&report)?)?;
            if let Some(p) = out_path {
                let cp = sibling(p, ".csv");
                std::fs::write(&cp, report.to_csv()).map_err(|e| Error::io(&cp, e))?;
            }
            Ok(())
        }
        Command::Config => emit(out, out_path, cfg.to_toml_string().as_bytes()),
        Command::Synth { n, catalog_out } => {
            let records = dataset::synthetic_workload(n, cfg.seed);
            let mut buf = Vec::new();
            for r in &records {
                serde_json::to_writer(&mut buf, r)?;
                buf.push(b'\n');
            }
            emit(out, out_path, &buf)?;
            if let Some(p) = catalog_out {
                dataset::write_jsonl(&p, &dataset::synthetic_catalog())?;
            }
            Ok(())
        }
    }
}
