//! Model backends for the five LLM roles.
//!
//! Every call goes through [`Roles`], which renders the role's prompt template,
//! charges the per-query [`CallLedger`], dispatches to a [`ChatBackend`] and
//! parses the reply. A backend receives both the rendered [`ChatRequest`] and the
//! structured [`RoleInput`] it was rendered from: the remote client sends the
//! former over the wire, the stub answers from the latter.

mod parse;
mod prompts;
mod remote;
mod stub;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use parse::{
    parse_decomposition, parse_intents, parse_level, parse_rerank_scores, parse_verdict,
};
pub use prompts::{PromptSet, PromptTemplate};
pub use remote::RemoteChat;
pub use stub::{stub_decompose, JudgeRule, StubBackend, StubBehavior};

use crate::embedstore::{Passage, ScoredPassage};
use crate::error::{Error, Result};
use crate::pipeline::{estimate_tokens, CallLedger};
use crate::qtc::{RouteMode, SemanticLevel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BackendRole {
    Decomposer,
    LevelAssessor,
    Judge,
    Reranker,
    IntentClassifier,
}

impl BackendRole {
    pub const ALL: [BackendRole; 5] = [
        BackendRole::Decomposer,
        BackendRole::LevelAssessor,
        BackendRole::Judge,
        BackendRole::Reranker,
        BackendRole::IntentClassifier,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Stable lowercase name, used for prompt file names and config keys.
    pub fn as_str(self) -> &'static str {
        match self {
            BackendRole::Decomposer => "decomposer",
            BackendRole::LevelAssessor => "assessor",
            BackendRole::Judge => "judge",
            BackendRole::Reranker => "reranker",
            BackendRole::IntentClassifier => "classifier",
        }
    }
}

impl fmt::Display for BackendRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BackendRole {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BackendRole::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| format!("unknown backend role `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MessageRole {
    System,
    User,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: MessageRole,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_output_tokens: u32,
}

impl ChatRequest {
    pub fn prompt_text(&self) -> String {
        self.messages
            .iter()
            .map(|m| m.content.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// Structured inputs a role was rendered from.
#[derive(Debug, Clone, Copy)]
pub enum RoleInput<'a> {
    Decompose {
        text: &'a str,
    },
    Assess {
        query: &'a str,
        snippets: &'a [String],
        mode: RouteMode,
        qci: f64,
    },
    Judge {
        original_query: &'a str,
        sub_query: &'a str,
        passage: &'a Passage,
        similarity: f64,
    },
    Rerank {
        query: &'a str,
        candidates: &'a [ScoredPassage],
    },
    Classify {
        query: &'a str,
        evidence: &'a [ScoredPassage],
        catalog: &'a [String],
    },
}

impl RoleInput<'_> {
    pub fn role(&self) -> BackendRole {
        match self {
            RoleInput::Decompose { .. } => BackendRole::Decomposer,
            RoleInput::Assess { .. } => BackendRole::LevelAssessor,
            RoleInput::Judge { .. } => BackendRole::Judge,
            RoleInput::Rerank { .. } => BackendRole::Reranker,
            RoleInput::Classify { .. } => BackendRole::IntentClassifier,
        }
    }
}

pub struct RoleCall<'a> {
    pub role: BackendRole,
    pub query_id: &'a str,
    pub request: &'a ChatRequest,
    pub input: RoleInput<'a>,
}

/// A chat-completion transport. Implementations must tolerate concurrent calls.
pub trait ChatBackend: Send + Sync {
    fn chat(&self, call: &RoleCall<'_>) -> std::result::Result<String, String>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Relevant,
    Irrelevant,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoleParams {
    pub temperature: f64,
    pub max_output_tokens: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoleSettings {
    pub decomposer: RoleParams,
    pub assessor: RoleParams,
    pub judge: RoleParams,
    pub reranker: RoleParams,
    pub classifier: RoleParams,
}

impl Default for RoleSettings {
    fn default() -> Self {
        let p = |temperature, max_output_tokens| RoleParams {
            temperature,
            max_output_tokens,
        };
        Self {
            decomposer: p(0.3, 256),
            assessor: p(0.0, 16),
            judge: p(0.1, 16),
            reranker: p(0.0, 512),
            classifier: p(0.0, 256),
        }
    }
}

impl RoleSettings {
    pub fn get(&self, role: BackendRole) -> RoleParams {
        match role {
            BackendRole::Decomposer => self.decomposer,
            BackendRole::LevelAssessor => self.assessor,
            BackendRole::Judge => self.judge,
            BackendRole::Reranker => self.reranker,
            BackendRole::IntentClassifier => self.classifier,
        }
    }
}

/// Role-level client: prompt rendering, ledger accounting, retries, parsing
/// and per-role fallbacks.
#[derive(Clone)]
pub struct Roles {
    backend: Arc<dyn ChatBackend>,
    prompts: PromptSet,
    settings: RoleSettings,
    model: String,
    decompose_retries: usize,
}

impl Roles {
    pub fn new(backend: Arc<dyn ChatBackend>) -> Self {
        Self {
            backend,
            prompts: PromptSet::default(),
            settings: RoleSettings::default(),
            model: "llama3.1:8b-instruct-fp16".into(),
            decompose_retries: 1,
        }
    }

    pub fn with_prompts(mut self, prompts: PromptSet) -> Self {
        self.prompts = prompts;
        self
    }

    pub fn with_settings(mut self, settings: RoleSettings) -> Self {
        self.settings = settings;
        self
    }

    pub fn with_model(mut self, model: impl Into<String>) -> Self {
        self.model = model.into();
        self
    }

    pub fn with_decompose_retries(mut self, retries: usize) -> Self {
        self.decompose_retries = retries;
        self
    }

    pub fn request_for(&self, input: &RoleInput<'_>) -> ChatRequest {
        let role = input.role();
        let params = self.settings.get(role);
        ChatRequest {
            model: self.model.clone(),
            messages: self.prompts.render(input),
            temperature: params.temperature,
            max_output_tokens: params.max_output_tokens,
        }
    }

    /// One ledger increment per attempt; transport failures are retried once.
    pub fn chat(
        &self,
        ledger: &CallLedger,
        query_id: &str,
        input: RoleInput<'_>,
    ) -> Result<String> {
        let role = input.role();
        let request = self.request_for(&input);
        let tokens = estimate_tokens(&request.prompt_text());
        let call = RoleCall {
            role,
            query_id,
            request: &request,
            input,
        };
        let mut last_err = String::new();
        for attempt in 0..2 {
            ledger.record_call(role, tokens);
            match self.backend.chat(&call) {
                Ok(text) => return Ok(text),
                Err(e) => {
                    log::debug!("{role} call for {query_id} failed (attempt {attempt}): {e}");
                    last_err = e;
                }
            }
        }
        Err(Error::Backend {
            role,
            query_id: query_id.to_owned(),
            message: last_err,
        })
    }

    /// Two distinct, nonempty sub-queries, or an error after the configured retries.
    pub fn decompose(
        &self,
        ledger: &CallLedger,
        query_id: &str,
        node_id: &str,
        text: &str,
    ) -> Result<(String, String)> {
        let mut problem = String::new();
        for _ in 0..=self.decompose_retries {
            match self.chat(ledger, query_id, RoleInput::Decompose { text }) {
                Ok(reply) => match parse_decomposition(&reply) {
                    Some(pair) => return Ok(pair),
                    None => problem = format!("unparseable decomposition: {reply:?}"),
                },
                Err(e) => problem = e.to_string(),
            }
        }
        Err(Error::Decomposition {
            node: node_id.to_owned(),
            message: problem,
        })
    }

    /// `Ok(None)` when the reply names no level.
    pub fn assess(
        &self,
        ledger: &CallLedger,
        query_id: &str,
        query: &str,
        snippets: &[String],
        mode: RouteMode,
        qci: f64,
    ) -> Result<Option<SemanticLevel>> {
        let reply = self.chat(
            ledger,
            query_id,
            RoleInput::Assess {
                query,
                snippets,
                mode,
                qci,
            },
        )?;
        let level = parse_level(&reply);
        if level.is_none() {
            ledger.warn(format!(
                "assessor reply unparseable for {query_id}: {reply:?}"
            ));
        }
        Ok(level)
    }

    /// Never fails: unparseable replies and transport errors both resolve to Relevant.
    pub fn judge(
        &self,
        ledger: &CallLedger,
        query_id: &str,
        original_query: &str,
        sub_query: &str,
        passage: &Passage,
        similarity: f64,
    ) -> Verdict {
        let input = RoleInput::Judge {
            original_query,
            sub_query,
            passage,
            similarity,
        };
        match self.chat(ledger, query_id, input) {
            Ok(reply) => parse_verdict(&reply).unwrap_or_else(|| {
                ledger.warn(format!(
                    "judge reply unparseable for passage {}: {reply:?}; retaining",
                    passage.id
                ));
                Verdict::Relevant
            }),
            Err(e) => {
                ledger.warn(format!("{e}; retaining passage {}", passage.id));
                Verdict::Relevant
            }
        }
    }

    /// One batched call. Missing scores become 0.5; a transport failure falls back
    /// to the retrieval cosines clamped to `[0, 1]`.
    pub fn rerank(
        &self,
        ledger: &CallLedger,
        query_id: &str,
        query: &str,
        candidates: &[ScoredPassage],
    ) -> Vec<f64> {
        match self.chat(ledger, query_id, RoleInput::Rerank { query, candidates }) {
            Ok(reply) => {
                let (scores, missing) = parse_rerank_scores(&reply, candidates.len());
                if !missing.is_empty() {
                    ledger.warn(format!(
                        "reranker gave no score for candidates {missing:?} of {query_id}; using 0.5"
                    ));
                }
                scores
            }
            Err(e) => {
                ledger.warn(format!("{e}; falling back to retrieval cosines"));
                candidates.iter().map(|c| c.score.clamp(0.0, 1.0)).collect()
            }
        }
    }

    /// Predicted intents, always a subset of `catalog`. Failures yield the empty set.
    pub fn classify(
        &self,
        ledger: &CallLedger,
        query_id: &str,
        query: &str,
        evidence: &[ScoredPassage],
        catalog: &[String],
    ) -> BTreeSet<String> {
        let input = RoleInput::Classify {
            query,
            evidence,
            catalog,
        };
        match self.chat(ledger, query_id, input) {
            Ok(reply) => {
                let (labels, dropped) = parse_intents(&reply, catalog);
                if !dropped.is_empty() {
                    ledger.warn(format!(
                        "classifier labels outside the catalog dropped for {query_id}: {dropped:?}"
                    ));
                }
                labels
            }
            Err(e) => {
                ledger.warn(format!("{e}; no intents predicted"));
                BTreeSet::new()
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Mutex;

    use super::*;

    /// Replies with a fixed string and records requests.
    struct Canned {
        reply: std::result::Result<String, String>,
        seen: Mutex<Vec<ChatRequest>>,
    }

    impl Canned {
        fn ok(reply: &str) -> Arc<Self> {
            Arc::new(Self {
                reply: Ok(reply.into()),
                seen: Mutex::new(vec![]),
            })
        }

        fn failing() -> Arc<Self> {
            Arc::new(Self {
                reply: Err("connection refused".into()),
                seen: Mutex::new(vec![]),
            })
        }
    }

    impl ChatBackend for Canned {
        fn chat(&self, call: &RoleCall<'_>) -> std::result::Result<String, String> {
            self.seen.lock().unwrap().push(call.request.clone());
            self.reply.clone()
        }
    }

    fn passages(n: usize) -> Vec<ScoredPassage> {
        (0..n)
            .map(|i| {
                ScoredPassage::cosine(
                    Arc::new(Passage::new(format!("p{i}"), format!("text {i}"))),
                    0.1 * i as f64,
                )
            })
            .collect()
    }

    #[test]
    fn temperatures_follow_roles() {
        let backend = Canned::ok("1. a\n2. b");
        let roles = Roles::new(backend.clone());
        let ledger = CallLedger::new();
        roles.decompose(&ledger, "q", "n0", "x and y").unwrap();
        let p = Passage::new("p", "t");
        roles.judge(&ledger, "q", "x", "y", &p, 0.5);
        let seen = backend.seen.lock().unwrap();
        assert_eq!(seen[0].temperature, 0.3);
        assert_eq!(seen[0].max_output_tokens, 256);
        assert_eq!(seen[1].temperature, 0.1);
        assert_eq!(seen[1].max_output_tokens, 16);
    }

    #[test]
    fn transport_failure_is_retried_once() {
        let backend = Canned::failing();
        let roles = Roles::new(backend.clone());
        let ledger = CallLedger::new();
        let err = roles
            .chat(&ledger, "q9", RoleInput::Decompose { text: "abc" })
            .unwrap_err();
        assert!(
            matches!(&err, Error::Backend { role: BackendRole::Decomposer, query_id, .. } if query_id == "q9")
        );
        assert_eq!(backend.seen.lock().unwrap().len(), 2);
        assert_eq!(ledger.calls(BackendRole::Decomposer), 2);
    }

    #[test]
    fn identical_subqueries_fail_after_retry() {
        let backend = Canned::ok("1. same thing\n2. same thing");
        let roles = Roles::new(backend.clone());
        let ledger = CallLedger::new();
        let err = roles.decompose(&ledger, "q", "n3", "abc def").unwrap_err();
        assert!(matches!(err, Error::Decomposition { ref node, .. } if node == "n3"));
        assert_eq!(ledger.calls(BackendRole::Decomposer), 2);
    }

    #[test]
    fn judge_fallbacks_retain() {
        let p = Passage::new("p", "t");
        let ledger = CallLedger::new();
        let garbage = Roles::new(Canned::ok("¯\\_(ツ)_/¯"));
        assert_eq!(
            garbage.judge(&ledger, "q", "a", "b", &p, 0.4),
            Verdict::Relevant
        );
        let down = Roles::new(Canned::failing());
        assert_eq!(
            down.judge(&ledger, "q", "a", "b", &p, 0.4),
            Verdict::Relevant
        );
        assert_eq!(ledger.warnings().len(), 2);
    }

    #[test]
    fn assessor_reads_first_level_keyword() {
        let roles = Roles::new(Canned::ok("Complexity: HIGH (not low)"));
        let ledger = CallLedger::new();
        let level = roles
            .assess(&ledger, "q", "x", &[], RouteMode::Tree, 0.5)
            .unwrap();
        assert_eq!(level, Some(SemanticLevel::High));
    }

    #[test]
    fn rerank_is_one_batched_call_with_fallbacks() {
        let ledger = CallLedger::new();
        let cands = passages(4);
        let roles = Roles::new(Canned::ok("1: 0.9\n2: 0.2\n4: 1.7"));
        let scores = roles.rerank(&ledger, "q", "x", &cands);
        assert_eq!(scores, vec![0.9, 0.2, 0.5, 1.0]);
        assert_eq!(ledger.calls(BackendRole::Reranker), 1);

        let down = Roles::new(Canned::failing());
        let scores = down.rerank(&ledger, "q", "x", &cands);
        let want: Vec<f64> = cands.iter().map(|c| c.score.clamp(0.0, 1.0)).collect();
        assert_eq!(scores, want);
    }

    #[test]
    fn classifier_output_is_catalog_closed() {
        let catalog: Vec<String> = ["balance", "transfer"].map(String::from).to_vec();
        let ledger = CallLedger::new();
        let roles = Roles::new(Canned::ok("balance, wire_fraud, transfer"));
        let labels = roles.classify(&ledger, "q", "x", &[], &catalog);
        assert_eq!(
            labels,
            ["balance", "transfer"]
                .map(String::from)
                .into_iter()
                .collect()
        );
        assert_eq!(ledger.warnings().len(), 1);
    }

    #[test]
    fn rerank_prompt_numbers_every_candidate() {
        let roles = Roles::new(Canned::ok(""));
        let cands = passages(3);
        let req = roles.request_for(&RoleInput::Rerank {
            query: "original question",
            candidates: &cands,
        });
        let text = req.prompt_text();
        assert!(text.contains("original question"));
        for i in 0..3 {
            assert!(text.contains(&format!("[{}] text {i}", i + 1)), "{text}");
        }
    }
}
