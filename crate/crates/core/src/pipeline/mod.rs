//! Per-query orchestration of the dual-path workflow, the two baseline modes,
//! and batch execution with instrumented traces.

mod ledger;

use std::collections::BTreeSet;
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use ledger::{estimate_tokens, CallLedger, CostLedger};

use crate::apm::Apm;
use crate::backends::{ChatBackend, PromptSet, RemoteChat, Roles, StubBackend};
use crate::config::{BackendKind, EngineConfig};
use crate::dataset::QueryRecord;
use crate::embedstore::{
    embed, EmbeddingProvider, Passage, RemoteEmbedder, ScoreKind, ScoredPassage, StubEmbedder,
    VectorStore,
};
use crate::error::{Error, Result};
use crate::lingsig::{tokenize, SignalVector, TokenizedQuery};
use crate::qtc::{LevelAssessor, RouteMode, Router, RoutingDecision, SemanticLevel};
use crate::rrl::Consolidator;
use crate::tor::{collect_evidence, TreeBuilder, TreeContext};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ExecutionMode {
    #[serde(rename = "adaptive")]
    Adaptive,
    #[serde(rename = "fixed3")]
    FixedDepth3,
    #[serde(rename = "standard")]
    StandardRag,
}

impl ExecutionMode {
    pub const ALL: [ExecutionMode; 3] = [
        ExecutionMode::Adaptive,
        ExecutionMode::FixedDepth3,
        ExecutionMode::StandardRag,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExecutionMode::Adaptive => "adaptive",
            ExecutionMode::FixedDepth3 => "fixed3",
            ExecutionMode::StandardRag => "standard",
        }
    }
}

impl fmt::Display for ExecutionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExecutionMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        ExecutionMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown mode `{s}` (expected adaptive, fixed3 or standard)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LatencySource {
    Wall,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceItem {
    pub passage_id: String,
    pub score: f64,
    pub kind: ScoreKind,
}

impl From<&ScoredPassage> for EvidenceItem {
    fn from(s: &ScoredPassage) -> Self {
        Self {
            passage_id: s.passage.id.clone(),
            score: s.score,
            kind: s.kind,
        }
    }
}

/// Execution record of one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryTrace {
    pub query_id: String,
    pub execution: ExecutionMode,
    pub mode: RouteMode,
    pub qci: f64,
    pub signals: SignalVector,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<SemanticLevel>,
    pub depth: u8,
    pub node_count: usize,
    pub pruned_node_count: usize,
    pub evidence: Vec<EvidenceItem>,
    pub predicted_intents: BTreeSet<String>,
    pub ledger: CostLedger,
    pub latency_source: LatencySource,
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl QueryTrace {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

/// What a query is forced through.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Plan {
    Adaptive,
    /// Skip routing and use this depth; 0 is the single-step path.
    Forced(u8),
    Standard,
}

struct RoleAssessor<'a> {
    roles: &'a Roles,
    ledger: &'a CallLedger,
    query_id: &'a str,
}

impl LevelAssessor for RoleAssessor<'_> {
    fn assess(
        &self,
        query: &TokenizedQuery,
        snippets: &[String],
        mode: RouteMode,
        qci: f64,
    ) -> Result<Option<SemanticLevel>> {
        self.roles.assess(
            self.ledger,
            self.query_id,
            &query.raw_text,
            snippets,
            mode,
            qci,
        )
    }
}

/// Everything built before the query proper runs; filled in progressively so a
/// failure still yields a trace with what was known.
struct Partial {
    mode: RouteMode,
    qci: f64,
    signals: SignalVector,
    level: Option<SemanticLevel>,
    depth: u8,
    node_count: usize,
    pruned_node_count: usize,
    evidence: Vec<ScoredPassage>,
    predicted: BTreeSet<String>,
    finalized: Option<(Duration, usize, usize, u64)>,
}

pub struct Engine {
    config: EngineConfig,
    store: VectorStore,
    embedder: Arc<dyn EmbeddingProvider>,
    roles: Roles,
    router: Router,
    catalog: Vec<String>,
}

impl Engine {
    /// The intent catalog defaults to every label carried by a passage.
    pub fn new(
        config: EngineConfig,
        passages: Vec<Passage>,
        embedder: Arc<dyn EmbeddingProvider>,
        backend: Arc<dyn ChatBackend>,
    ) -> Result<Self> {
        config.validate()?;
        if embedder.dimension() != config.store.dimension {
            return Err(Error::DimensionMismatch {
                expected: config.store.dimension,
                actual: embedder.dimension(),
            });
        }
        let catalog: BTreeSet<String> = passages
            .iter()
            .flat_map(|p| p.intent_labels.iter().cloned())
            .collect();
        let store = VectorStore::build(passages, embedder.as_ref())?;
        let prompts = if config.backend.prompt_dir.is_empty() {
            PromptSet::default()
        } else {
            PromptSet::load_dir(Path::new(&config.backend.prompt_dir))?
        };
        let roles = Roles::new(backend)
            .with_prompts(prompts)
            .with_settings(config.role_settings())
            .with_model(config.backend.model.clone())
            .with_decompose_retries(config.tor.retry_decompose);
        Ok(Self {
            router: config.router(),
            config,
            store,
            embedder,
            roles,
            catalog: catalog.into_iter().collect(),
        })
    }

    /// Builds embedder and chat backend from the `embed` and `backend` sections.
    pub fn from_config(config: EngineConfig, passages: Vec<Passage>) -> Result<Self> {
        let embedder: Arc<dyn EmbeddingProvider> = match config.embed.backend {
            BackendKind::Stub => Arc::new(StubEmbedder::new(config.store.dimension, config.seed)),
            BackendKind::Remote => Arc::new(RemoteEmbedder::new(
                &config.embed.endpoint,
                &config.embed.model,
                config.store.dimension,
                Duration::from_millis(config.embed.timeout_ms),
            )),
        };
        let backend: Arc<dyn ChatBackend> = match config.backend.kind {
            BackendKind::Stub => Arc::new(StubBackend::new(config.stub_behavior()?)),
            BackendKind::Remote => Arc::new(RemoteChat::new(
                &config.backend.endpoint,
                Duration::from_millis(config.backend.timeout_ms),
                config.backend.max_in_flight,
            )),
        };
        Self::new(config, passages, embedder, backend)
    }

    pub fn with_catalog(mut self, catalog: Vec<String>) -> Self {
        self.catalog = catalog;
        self
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn store(&self) -> &VectorStore {
        &self.store
    }

    pub fn roles(&self) -> &Roles {
        &self.roles
    }

    pub fn router(&self) -> &Router {
        &self.router
    }

    pub fn catalog(&self) -> &[String] {
        &self.catalog
    }

    fn preliminary(&self, text: &str, ledger: &CallLedger) -> Result<Vec<ScoredPassage>> {
        ledger.record_retrieval();
        let q = embed(text, self.embedder.as_ref())?;
        self.store.search(&q, self.config.store.k)
    }

    fn snippets(&self, prelim: &[ScoredPassage]) -> Vec<String> {
        prelim
            .iter()
            .take(self.config.qtc.assessor_snippets)
            .map(|s| s.passage.text.clone())
            .collect()
    }

    /// Routing only: signals, mode and (for Tree mode) one assessor call.
    pub fn route(&self, query_id: &str, text: &str) -> Result<(RoutingDecision, CostLedger)> {
        let ledger = CallLedger::new();
        let tq = tokenize(text);
        let (_, _, mode) = self.router.initial_mode(&tq);
        let snippets = if mode == RouteMode::Tree {
            self.snippets(&self.preliminary(text, &ledger)?)
        } else {
            Vec::new()
        };
        let assessor = RoleAssessor {
            roles: &self.roles,
            ledger: &ledger,
            query_id,
        };
        let decision = self.router.decide(query_id, &tq, &snippets, &assessor)?;
        Ok((decision, ledger.snapshot(0.0)))
    }

    fn consolidator(&self) -> Consolidator<'_> {
        Consolidator {
            policy: self.config.dedup_policy(),
            rule: self.config.selection_rule(),
            embeddings: &self.store,
            roles: &self.roles,
        }
    }

    fn single_step(&self, prelim: Vec<ScoredPassage>) -> Vec<ScoredPassage> {
        let mut ev = prelim;
        ev.truncate(self.config.rrl.cap);
        ev
    }

    fn execute(
        &self,
        record: &QueryRecord,
        plan: Plan,
        ledger: &CallLedger,
        started: Instant,
        p: &mut Partial,
    ) -> Result<()> {
        let qid = record.id.as_str();
        let text = record.text.as_str();
        let tq = tokenize(text);
        let (signals, qci, initial) = self.router.initial_mode(&tq);
        p.signals = signals;
        p.qci = qci;
        let prelim = self.preliminary(text, ledger)?;

        let depth = match plan {
            Plan::Adaptive => {
                let assessor = RoleAssessor {
                    roles: &self.roles,
                    ledger,
                    query_id: qid,
                };
                let d = self
                    .router
                    .decide(qid, &tq, &self.snippets(&prelim), &assessor)?;
                p.mode = d.mode;
                p.level = d.level;
                if d.level_fallback {
                    ledger.warn(format!(
                        "{qid}: assessor level unparseable; using {}",
                        self.router.fallback_level
                    ));
                }
                d.depth
            }
            Plan::Forced(d) => {
                p.mode = if d == 0 { initial } else { RouteMode::Tree };
                d
            }
            Plan::Standard => {
                p.mode = RouteMode::Simple;
                0
            }
        };
        p.depth = depth;

        let evidence = if plan == Plan::Standard {
            self.consolidator()
                .consolidate(ledger, qid, text, prelim)?
                .evidence
        } else if depth == 0 {
            self.single_step(prelim)
        } else {
            let original = embed(text, self.embedder.as_ref())?;
            let parallel = self.config.parallel_nodes();
            let pruner = Apm {
                thresholds: self.config.gate(),
                embeddings: &self.store,
                judge: &self.roles,
                parallel,
            };
            let builder = TreeBuilder {
                store: &self.store,
                embedder: self.embedder.as_ref(),
                pruner: &pruner,
                decomposer: &self.roles,
                k: self.config.store.k,
                parallel,
            };
            let ctx = TreeContext {
                query_id: qid,
                original_query: text,
                original_embedding: &original,
                ledger,
            };
            let tree = builder.expand(&ctx, text, Some(prelim.clone()), depth)?;
            p.node_count = tree.node_count();
            p.pruned_node_count = tree.pruned_count();
            if tree.root().pruned {
                ledger.warn(format!(
                    "{qid}: root decomposition failed; using single-step evidence"
                ));
                self.single_step(prelim)
            } else {
                self.consolidator()
                    .consolidate(ledger, qid, text, collect_evidence(&tree))?
                    .evidence
            }
        };
        p.finalized = Some((
            started.elapsed(),
            ledger.total_calls(),
            ledger.retrievals(),
            ledger.prompt_tokens(),
        ));
        p.predicted = self
            .roles
            .classify(ledger, qid, text, &evidence, &self.catalog);
        p.evidence = evidence;
        Ok(())
    }

    fn synthetic_latency(&self, calls: usize, retrievals: usize, tokens: u64) -> f64 {
        let l = &self.config.latency;
        l.query_overhead_ms
            + retrievals as f64 * l.retrieval_ms
            + calls as f64 * l.call_ms
            + tokens as f64 * l.per_prompt_token_ms
    }

    fn run(&self, record: &QueryRecord, execution: ExecutionMode, plan: Plan) -> QueryTrace {
        let started = Instant::now();
        let ledger = CallLedger::new();
        let mut p = Partial {
            mode: RouteMode::Simple,
            qci: 0.0,
            signals: SignalVector::new(0, 0, 0, 0, 0.0),
            level: None,
            depth: 0,
            node_count: 1,
            pruned_node_count: 0,
            evidence: Vec::new(),
            predicted: BTreeSet::new(),
            finalized: None,
        };
        let error = self
            .execute(record, plan, &ledger, started, &mut p)
            .err()
            .map(|e| {
                ledger.warn(format!("{}: query failed: {e}", record.id));
                e.to_string()
            });
        // Latency stops at evidence finalization; a failed query is charged up to the failure.
        let (wall, calls, retrievals, tokens) = p.finalized.unwrap_or((
            started.elapsed(),
            ledger.total_calls(),
            ledger.retrievals(),
            ledger.prompt_tokens(),
        ));
        let (latency_ms, latency_source) = if self.config.synthetic_latency() {
            (
                self.synthetic_latency(calls, retrievals, tokens),
                LatencySource::Synthetic,
            )
        } else {
            (wall.as_secs_f64() * 1e3, LatencySource::Wall)
        };
        QueryTrace {
            query_id: record.id.clone(),
            execution,
            mode: p.mode,
            qci: p.qci,
            signals: p.signals,
            level: p.level,
            depth: p.depth,
            node_count: p.node_count,
            pruned_node_count: p.pruned_node_count,
            evidence: p.evidence.iter().map(EvidenceItem::from).collect(),
            predicted_intents: p.predicted,
            ledger: ledger.snapshot(latency_ms),
            latency_source,
            warnings: ledger.warnings(),
            error,
        }
    }

    /// Never panics or returns an error: failures are recorded on the trace.
    pub fn process_query(&self, record: &QueryRecord, mode: ExecutionMode) -> QueryTrace {
        let plan = match mode {
            ExecutionMode::Adaptive => Plan::Adaptive,
            ExecutionMode::FixedDepth3 => Plan::Forced(3),
            ExecutionMode::StandardRag => Plan::Standard,
        };
        self.run(record, mode, plan)
    }

    /// Skips routing and runs the tree path at `depth` (0 = single-step path).
    pub fn process_at_depth(&self, record: &QueryRecord, depth: u8) -> Result<QueryTrace> {
        if depth > crate::qtc::MAX_DEPTH {
            return Err(Error::DepthAssignment(format!(
                "forced depth {depth} exceeds the cap of {}",
                crate::qtc::MAX_DEPTH
            )));
        }
        Ok(self.run(record, ExecutionMode::FixedDepth3, Plan::Forced(depth)))
    }

    /// One trace per query, in input order, using `config.jobs` workers.
    pub fn run_workload(&self, queries: &[QueryRecord], mode: ExecutionMode) -> Vec<QueryTrace> {
        let jobs = self.config.jobs.max(1);
        if jobs == 1 {
            return queries
                .iter()
                .map(|q| self.process_query(q, mode))
                .collect();
        }
        match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
            Ok(pool) => pool.install(|| {
                queries
                    .par_iter()
                    .map(|q| self.process_query(q, mode))
                    .collect()
            }),
            Err(e) => {
                log::warn!("thread pool unavailable ({e}); running sequentially");
                queries
                    .iter()
                    .map(|q| self.process_query(q, mode))
                    .collect()
            }
        }
    }
}

/// Run-level metadata kept beside the trace file so the traces themselves
/// stay free of timestamps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub mode: ExecutionMode,
    pub config_hash: String,
    pub seed: u64,
    pub deterministic: bool,
    pub queries: usize,
    pub failed: usize,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
}

pub fn unix_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}

pub fn traces_to_jsonl(traces: &[QueryTrace]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    for t in traces {
        serde_json::to_writer(&mut buf, t)?;
        buf.push(b'\n');
    }
    Ok(buf)
}

pub fn write_traces(path: &Path, traces: &[QueryTrace]) -> Result<()> {
    let buf = traces_to_jsonl(traces)?;
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

pub fn read_traces(path: &Path) -> Result<Vec<QueryTrace>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Dataset {
            path: path.to_owned(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::{BackendRole, StubBehavior};
    use crate::dataset::{build_kb, synthetic_catalog, synthetic_workload};

    fn engine(config: EngineConfig) -> (Engine, Arc<StubBackend>) {
        let stub = Arc::new(StubBackend::new(config.stub_behavior().unwrap()));
        let embedder = Arc::new(StubEmbedder::new(config.store.dimension, config.seed));
        let kb = build_kb(&[], Some(&synthetic_catalog()));
        let e = Engine::new(config, kb, embedder, stub.clone()).unwrap();
        (e, stub)
    }

    fn record(id: &str, text: &str) -> QueryRecord {
        QueryRecord {
            id: id.into(),
            text: text.into(),
            intents: ["wifi".to_owned()].into(),
            domain: None,
        }
    }

    fn never_pruning() -> EngineConfig {
        let mut c = EngineConfig {
            deterministic: true,
            ..Default::default()
        };
        c.apm.hi = 0.0;
        c.apm.lo = 0.0;
        c
    }

    #[test]
    fn simple_query_bypasses_tree_and_rerank() {
        let (e, _) = engine(EngineConfig::default());
        let t = e.process_query(&record("q1", "cancel my card"), ExecutionMode::Adaptive);
        assert_eq!((t.mode, t.depth), (RouteMode::Simple, 0));
        assert_eq!(t.ledger.calls(BackendRole::Reranker), 0);
        assert_eq!(t.ledger.calls(BackendRole::Decomposer), 0);
        assert_eq!(t.ledger.calls(BackendRole::LevelAssessor), 0);
        assert_eq!(t.ledger.calls(BackendRole::IntentClassifier), 1);
        assert!(t.evidence.len() <= 10);
        assert!(t.evidence.iter().all(|e| e.kind == ScoreKind::Cosine));
    }

    #[test]
    fn tree_query_is_assessed_and_consolidated() {
        let (e, _) = engine(EngineConfig::default());
        let t = e.process_query(
            &record("q2", "compare interest rates and recommend the best option"),
            ExecutionMode::Adaptive,
        );
        assert_eq!(t.mode, RouteMode::Tree);
        assert!(t.depth >= 1);
        assert_eq!(t.ledger.calls(BackendRole::LevelAssessor), 1);
        assert_eq!(t.ledger.calls(BackendRole::Reranker), 1);
        assert!(t.evidence.iter().all(|e| e.kind == ScoreKind::Rerank));
        assert!(!t.failed());
    }

    #[test]
    fn fixed_depth_three_call_counts() {
        let (e, stub) = engine(never_pruning());
        let t = e.process_query(&record("q", "show my balance"), ExecutionMode::FixedDepth3);
        assert_eq!(t.depth, 3);
        assert_eq!(t.node_count, 15);
        assert_eq!(t.ledger.calls(BackendRole::Decomposer), 7);
        assert_eq!(t.ledger.calls(BackendRole::Reranker), 1);
        assert_eq!(t.ledger.calls(BackendRole::IntentClassifier), 1);
        assert_eq!(t.ledger.calls(BackendRole::Judge), 0);
        assert_eq!(t.ledger.total_calls, 9);
        assert_eq!(stub.observed_total(), 9);
    }

    #[test]
    fn standard_rag_makes_two_calls() {
        let (e, _) = engine(EngineConfig::default());
        let t = e.process_query(&record("q", "is wifi free"), ExecutionMode::StandardRag);
        assert_eq!(t.ledger.total_calls, 2);
        assert_eq!(t.ledger.calls(BackendRole::Reranker), 1);
    }

    #[test]
    fn backend_failure_yields_failed_trace() {
        let mut c = EngineConfig::default();
        c.stub.fail_roles = vec!["assessor".into()];
        let (e, _) = engine(c);
        let t = e.process_query(
            &record("q", "compare rates and fees"),
            ExecutionMode::Adaptive,
        );
        assert!(t.failed());
        assert_eq!(t.ledger.calls(BackendRole::LevelAssessor), 2);
        assert!(t.error.as_deref().unwrap().contains("assessor"));
    }

    #[test]
    fn garbage_decomposer_degrades_to_single_step() {
        let mut c = EngineConfig::default();
        c.stub.garbage_roles = vec!["decomposer".into()];
        let (e, _) = engine(c);
        let t = e.process_query(&record("q", "show my balance"), ExecutionMode::FixedDepth3);
        assert!(!t.failed());
        assert_eq!(t.ledger.calls(BackendRole::Decomposer), 2);
        assert_eq!(t.ledger.calls(BackendRole::Reranker), 0);
        assert!(t.warnings.iter().any(|w| w.contains("root decomposition")));
    }

    #[test]
    fn assessor_garbage_falls_back_to_mid() {
        let mut c = EngineConfig::default();
        c.stub.garbage_roles = vec!["assessor".into()];
        let (e, _) = engine(c);
        let t = e.process_query(&record("q", "rates or fees"), ExecutionMode::Adaptive);
        assert_eq!((t.level, t.depth), (Some(SemanticLevel::Mid), 2));
    }

    #[test]
    fn forced_depth_tokens_increase() {
        let (e, _) = engine(never_pruning());
        let r = record("q", "book a room for two nights and is breakfast included");
        let tokens: Vec<u64> = (0..=3)
            .map(|d| e.process_at_depth(&r, d).unwrap().ledger.prompt_tokens)
            .collect();
        assert!(tokens.windows(2).all(|w| w[0] < w[1]), "{tokens:?}");
        assert!(e.process_at_depth(&r, 4).is_err());
    }

    #[test]
    fn workload_is_deterministic_and_ordered() {
        let queries = synthetic_workload(40, 3);
        let mut c = EngineConfig {
            deterministic: true,
            jobs: 4,
            ..Default::default()
        };
        c.stub.judge = crate::backends::JudgeRule::Coin(0.5);
        let (e, _) = engine(c.clone());
        let a = traces_to_jsonl(&e.run_workload(&queries, ExecutionMode::Adaptive)).unwrap();
        let (e2, _) = engine(c);
        let b = traces_to_jsonl(&e2.run_workload(&queries, ExecutionMode::Adaptive)).unwrap();
        assert_eq!(a, b);
        let traces = e.run_workload(&queries, ExecutionMode::Adaptive);
        let ids: Vec<&str> = traces.iter().map(|t| t.query_id.as_str()).collect();
        let want: Vec<&str> = queries.iter().map(|q| q.id.as_str()).collect();
        assert_eq!(ids, want);
        assert!(e.run_workload(&[], ExecutionMode::Adaptive).is_empty());
    }

    #[test]
    fn traces_round_trip_through_jsonl() {
        let dir = tempfile::tempdir().unwrap();
        let (e, _) = engine(EngineConfig::default());
        let traces = e.run_workload(&synthetic_workload(5, 1), ExecutionMode::Adaptive);
        let p = dir.path().join("t.jsonl");
        write_traces(&p, &traces).unwrap();
        assert_eq!(read_traces(&p).unwrap(), traces);
    }

    #[test]
    fn route_only_charges_assessor_for_tree() {
        let (e, _) = engine(EngineConfig::default());
        let (d, l) = e.route("r", "cancel my card").unwrap();
        assert_eq!((d.mode, d.depth, l.total_calls), (RouteMode::Simple, 0, 0));
        let (d, l) = e.route("r", "compare rates and fees").unwrap();
        assert_eq!((d.mode, l.total_calls), (RouteMode::Tree, 1));
        let _ = StubBehavior::default();
    }

    #[test]
    fn mode_names() {
        for m in ExecutionMode::ALL {
            assert_eq!(m.as_str().parse::<ExecutionMode>().unwrap(), m);
        }
        assert!("fast".parse::<ExecutionMode>().is_err());
    }
}
