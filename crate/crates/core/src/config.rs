//! Engine configuration: a sectioned TOML file where every published constant
//! is a key carrying its published default.
//!
//! Precedence is flag > environment > file > default. Environment overrides
//! use the `ATOR_` prefix (see [`EngineConfig::apply_env`]).

use std::collections::BTreeSet;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::apm::GateThresholds;
use crate::backends::{BackendRole, JudgeRule, RoleParams, RoleSettings, StubBehavior};
use crate::embedstore::{DEFAULT_DIMENSION, DEFAULT_K};
use crate::error::{Error, Result};
use crate::lingsig::{QciWeights, SignalLexicons};
use crate::qtc::{Router, SemanticLevel, MAX_DEPTH};
use crate::rrl::{DedupPolicy, SelectionRule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QciSection {
    pub length_threshold: usize,
    pub weights: QciWeights,
    pub lexicon: SignalLexicons,
}

impl Default for QciSection {
    fn default() -> Self {
        Self {
            length_threshold: 25,
            weights: QciWeights::default(),
            lexicon: SignalLexicons::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QtcSection {
    pub tau_simple: f64,
    pub assessor_snippets: usize,
    pub fallback_level: SemanticLevel,
    pub max_depth: u8,
}

impl Default for QtcSection {
    fn default() -> Self {
        Self {
            tau_simple: 0.10,
            assessor_snippets: 3,
            fallback_level: SemanticLevel::Mid,
            max_depth: MAX_DEPTH,
        }
    }
}

/// Inert graph-index parameters, kept for a future external store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HnswSection {
    pub m: usize,
    pub ef_construction: usize,
}

impl Default for HnswSection {
    fn default() -> Self {
        Self {
            m: 32,
            ef_construction: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StoreSection {
    pub dimension: usize,
    pub k: usize,
    pub hnsw: HnswSection,
}

impl Default for StoreSection {
    fn default() -> Self {
        Self {
            dimension: DEFAULT_DIMENSION,
            k: DEFAULT_K,
            hnsw: HnswSection::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Stub,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedSection {
    pub backend: BackendKind,
    pub endpoint: String,
    pub model: String,
    pub timeout_ms: u64,
}

impl Default for EmbedSection {
    fn default() -> Self {
        Self {
            backend: BackendKind::Stub,
            endpoint: "http://localhost:11434".into(),
            model: "all-mpnet-base-v2".into(),
            timeout_ms: 30_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TorSection {
    pub retry_decompose: usize,
    /// Expand sibling nodes sequentially even when not in deterministic mode.
    pub deterministic: bool,
}

impl Default for TorSection {
    fn default() -> Self {
        Self {
            retry_decompose: 1,
            deterministic: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ApmSection {
    pub hi: f64,
    pub lo: f64,
    pub judge_temperature: f64,
}

impl Default for ApmSection {
    fn default() -> Self {
        Self {
            hi: 0.70,
            lo: 0.35,
            judge_temperature: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RrlSection {
    pub near_dup_threshold: f64,
    pub top_rank: usize,
    pub score_floor: f64,
    pub cap: usize,
    pub floor_strict: bool,
}

impl Default for RrlSection {
    fn default() -> Self {
        let d = DedupPolicy::default();
        let s = SelectionRule::default();
        Self {
            near_dup_threshold: d.near_dup_threshold,
            top_rank: s.top_rank,
            score_floor: s.score_floor,
            cap: s.cap,
            floor_strict: s.floor_strict,
        }
    }
}

/// Judge temperature lives under `apm.judge_temperature`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TemperatureSection {
    pub decomposer: f64,
    pub assessor: f64,
    pub reranker: f64,
    pub classifier: f64,
}

impl Default for TemperatureSection {
    fn default() -> Self {
        let r = RoleSettings::default();
        Self {
            decomposer: r.decomposer.temperature,
            assessor: r.assessor.temperature,
            reranker: r.reranker.temperature,
            classifier: r.classifier.temperature,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaxTokensSection {
    pub decomposer: u32,
    pub assessor: u32,
    pub judge: u32,
    pub reranker: u32,
    pub classifier: u32,
}

impl Default for MaxTokensSection {
    fn default() -> Self {
        let r = RoleSettings::default();
        Self {
            decomposer: r.decomposer.max_output_tokens,
            assessor: r.assessor.max_output_tokens,
            judge: r.judge.max_output_tokens,
            reranker: r.reranker.max_output_tokens,
            classifier: r.classifier.max_output_tokens,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendSection {
    pub kind: BackendKind,
    pub endpoint: String,
    pub model: String,
    pub timeout_ms: u64,
    pub max_in_flight: usize,
    /// Empty means the built-in templates.
    pub prompt_dir: String,
    pub temperature: TemperatureSection,
    pub max_output_tokens: MaxTokensSection,
}

impl Default for BackendSection {
    fn default() -> Self {
        Self {
            kind: BackendKind::Stub,
            endpoint: "http://localhost:11434".into(),
            model: "llama3.1:8b-instruct-fp16".into(),
            timeout_ms: 60_000,
            max_in_flight: 4,
            prompt_dir: String::new(),
            temperature: TemperatureSection::default(),
            max_output_tokens: MaxTokensSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StubSection {
    /// Judge rule: `always-relevant`, `always-irrelevant`, `threshold:X` or `coin:P`.
    pub judge: JudgeRule,
    pub assessor_low_below: f64,
    pub assessor_mid_below: f64,
    pub fail_roles: Vec<String>,
    pub garbage_roles: Vec<String>,
}

impl Default for StubSection {
    fn default() -> Self {
        let b = StubBehavior::default();
        Self {
            judge: b.judge,
            assessor_low_below: b.assessor_bands.0,
            assessor_mid_below: b.assessor_bands.1,
            fail_roles: Vec::new(),
            garbage_roles: Vec::new(),
        }
    }
}

/// Per-event constants of the synthetic latency model. Used in place of the
/// wall clock when `enabled` is set or the run is deterministic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatencySection {
    pub enabled: bool,
    pub query_overhead_ms: f64,
    pub retrieval_ms: f64,
    pub call_ms: f64,
    pub per_prompt_token_ms: f64,
}

impl Default for LatencySection {
    fn default() -> Self {
        Self {
            enabled: false,
            query_overhead_ms: 5.0,
            retrieval_ms: 12.0,
            call_ms: 180.0,
            per_prompt_token_ms: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub seed: u64,
    pub deterministic: bool,
    pub jobs: usize,
    pub qci: QciSection,
    pub qtc: QtcSection,
    pub store: StoreSection,
    pub embed: EmbedSection,
    pub tor: TorSection,
    pub apm: ApmSection,
    pub rrl: RrlSection,
    pub backend: BackendSection,
    pub stub: StubSection,
    pub latency: LatencySection,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            deterministic: false,
            jobs: 4,
            qci: QciSection::default(),
            qtc: QtcSection::default(),
            store: StoreSection::default(),
            embed: EmbedSection::default(),
            tor: TorSection::default(),
            apm: ApmSection::default(),
            rrl: RrlSection::default(),
            backend: BackendSection::default(),
            stub: StubSection::default(),
            latency: LatencySection::default(),
        }
    }
}

fn parse_roles(key: &str, names: &[String]) -> Result<BTreeSet<BackendRole>> {
    names
        .iter()
        .map(|n| BackendRole::from_str(n).map_err(|e| Error::config(key, e)))
        .collect()
}

fn check(ok: bool, key: &str, message: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::config(key, message()))
    }
}

impl EngineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    /// Hex SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml_string().as_bytes()))
    }

    /// Applies `ATOR_BACKEND_ENDPOINT`, `ATOR_BACKEND_MODEL`, `ATOR_EMBED_ENDPOINT`
    /// and `ATOR_EMBED_MODEL` when set.
    pub fn apply_env(&mut self) {
        self.apply_env_from(|k| std::env::var(k).ok());
    }

    pub fn apply_env_from(&mut self, get: impl Fn(&str) -> Option<String>) {
        if let Some(v) = get("ATOR_BACKEND_ENDPOINT") {
            self.backend.endpoint = v;
        }
        if let Some(v) = get("ATOR_BACKEND_MODEL") {
            self.backend.model = v;
        }
        if let Some(v) = get("ATOR_EMBED_ENDPOINT") {
            self.embed.endpoint = v;
        }
        if let Some(v) = get("ATOR_EMBED_MODEL") {
            self.embed.model = v;
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.qci.weights.validate()?;
        self.qci.lexicon.validate()?;
        check(
            self.qci.length_threshold > 0,
            "qci.length_threshold",
            || "must be positive".into(),
        )?;
        check(
            (0.0..=1.0).contains(&self.qtc.tau_simple),
            "qtc.tau_simple",
            || format!("must lie in [0, 1], got {}", self.qtc.tau_simple),
        )?;
        check(self.qtc.max_depth == MAX_DEPTH, "qtc.max_depth", || {
            format!("depth cap is fixed at {MAX_DEPTH}")
        })?;
        check(self.store.dimension > 0, "store.dimension", || {
            "must be positive".into()
        })?;
        check(self.store.k > 0, "store.k", || "must be positive".into())?;
        check(self.jobs > 0, "jobs", || "must be positive".into())?;
        self.gate().validate()?;
        check(
            self.apm.judge_temperature >= 0.0,
            "apm.judge_temperature",
            || "must be nonnegative".into(),
        )?;
        self.dedup_policy().validate()?;
        self.selection_rule().validate()?;
        let t = &self.backend.temperature;
        for (name, v) in [
            ("decomposer", t.decomposer),
            ("assessor", t.assessor),
            ("reranker", t.reranker),
            ("classifier", t.classifier),
        ] {
            check(v >= 0.0, &format!("backend.temperature.{name}"), || {
                "must be nonnegative".into()
            })?;
        }
        let m = &self.backend.max_output_tokens;
        for (name, v) in [
            ("decomposer", m.decomposer),
            ("assessor", m.assessor),
            ("judge", m.judge),
            ("reranker", m.reranker),
            ("classifier", m.classifier),
        ] {
            check(v > 0, &format!("backend.max_output_tokens.{name}"), || {
                "must be positive".into()
            })?;
        }
        check(
            self.backend.max_in_flight > 0,
            "backend.max_in_flight",
            || "must be positive".into(),
        )?;
        let s = &self.stub;
        check(
            0.0 <= s.assessor_low_below && s.assessor_low_below <= s.assessor_mid_below,
            "stub.assessor_low_below",
            || "bands must satisfy 0 <= low_below <= mid_below".into(),
        )?;
        parse_roles("stub.fail_roles", &s.fail_roles)?;
        parse_roles("stub.garbage_roles", &s.garbage_roles)?;
        let l = &self.latency;
        for (name, v) in [
            ("query_overhead_ms", l.query_overhead_ms),
            ("retrieval_ms", l.retrieval_ms),
            ("call_ms", l.call_ms),
            ("per_prompt_token_ms", l.per_prompt_token_ms),
        ] {
            check(v >= 0.0, &format!("latency.{name}"), || {
                "must be nonnegative".into()
            })?;
        }
        Ok(())
    }

    pub fn router(&self) -> Router {
        Router {
            lexicons: self.qci.lexicon.clone(),
            weights: self.qci.weights,
            length_threshold: self.qci.length_threshold,
            tau_simple: self.qtc.tau_simple,
            fallback_level: self.qtc.fallback_level,
        }
    }

    pub fn gate(&self) -> GateThresholds {
        GateThresholds {
            hi: self.apm.hi,
            lo: self.apm.lo,
        }
    }

    pub fn dedup_policy(&self) -> DedupPolicy {
        DedupPolicy {
            near_dup_threshold: self.rrl.near_dup_threshold,
        }
    }

    pub fn selection_rule(&self) -> SelectionRule {
        SelectionRule {
            top_rank: self.rrl.top_rank,
            score_floor: self.rrl.score_floor,
            cap: self.rrl.cap,
            floor_strict: self.rrl.floor_strict,
        }
    }

    pub fn role_settings(&self) -> RoleSettings {
        let t = &self.backend.temperature;
        let m = &self.backend.max_output_tokens;
        let p = |temperature, max_output_tokens| RoleParams {
            temperature,
            max_output_tokens,
        };
        RoleSettings {
            decomposer: p(t.decomposer, m.decomposer),
            assessor: p(t.assessor, m.assessor),
            judge: p(self.apm.judge_temperature, m.judge),
            reranker: p(t.reranker, m.reranker),
            classifier: p(t.classifier, m.classifier),
        }
    }

    pub fn stub_behavior(&self) -> Result<StubBehavior> {
        Ok(StubBehavior {
            seed: self.seed,
            conjunctions: self.qci.lexicon.conjunction.clone(),
            assessor_bands: (self.stub.assessor_low_below, self.stub.assessor_mid_below),
            judge: self.stub.judge,
            fail_roles: parse_roles("stub.fail_roles", &self.stub.fail_roles)?,
            garbage_roles: parse_roles("stub.garbage_roles", &self.stub.garbage_roles)?,
        })
    }

    /// Siblings are expanded sequentially in deterministic mode.
    pub fn parallel_nodes(&self) -> bool {
        !(self.deterministic || self.tor.deterministic)
    }

    pub fn synthetic_latency(&self) -> bool {
        self.deterministic || self.latency.enabled
    }
}
