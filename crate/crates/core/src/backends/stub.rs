use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use super::{BackendRole, ChatBackend, RoleCall, RoleInput};
use crate::lingsig::{tokenize, SignalLexicons};
use crate::qtc::SemanticLevel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum JudgeRule {
    AlwaysRelevant,
    AlwaysIrrelevant,
    /// Relevant iff the gate similarity is at least the value.
    Threshold(f64),
    /// Relevant with the given probability, drawn from a seeded hash of the
    /// (sub-query, passage) pair so the outcome is reproducible.
    Coin(f64),
}

impl fmt::Display for JudgeRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            JudgeRule::AlwaysRelevant => f.write_str("always-relevant"),
            JudgeRule::AlwaysIrrelevant => f.write_str("always-irrelevant"),
            JudgeRule::Threshold(t) => write!(f, "threshold:{t}"),
            JudgeRule::Coin(p) => write!(f, "coin:{p}"),
        }
    }
}

impl FromStr for JudgeRule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let num = |v: &str| {
            v.parse::<f64>()
                .map_err(|e| format!("bad judge rule `{s}`: {e}"))
        };
        match s.split_once(':') {
            None if s == "always-relevant" => Ok(JudgeRule::AlwaysRelevant),
            None if s == "always-irrelevant" => Ok(JudgeRule::AlwaysIrrelevant),
            Some(("threshold", v)) => num(v).map(JudgeRule::Threshold),
            Some(("coin", v)) => num(v).map(JudgeRule::Coin),
            _ => Err(format!(
                "bad judge rule `{s}` (expected always-relevant, always-irrelevant, threshold:<x> or coin:<p>)"
            )),
        }
    }
}

impl TryFrom<String> for JudgeRule {
    type Error = String;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

impl From<JudgeRule> for String {
    fn from(value: JudgeRule) -> Self {
        value.to_string()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StubBehavior {
    pub seed: u64,
    pub conjunctions: BTreeSet<String>,
    /// QCI below `.0` is Low, below `.1` is Mid, anything else High.
    pub assessor_bands: (f64, f64),
    pub judge: JudgeRule,
    /// Roles whose calls fail at the transport level.
    pub fail_roles: BTreeSet<BackendRole>,
    /// Roles whose calls return text no parser accepts.
    pub garbage_roles: BTreeSet<BackendRole>,
}

impl Default for StubBehavior {
    fn default() -> Self {
        Self {
            seed: 0,
            conjunctions: SignalLexicons::default().conjunction,
            assessor_bands: (0.35, 0.55),
            judge: JudgeRule::AlwaysRelevant,
            fail_roles: BTreeSet::new(),
            garbage_roles: BTreeSet::new(),
        }
    }
}

/// Splits at the first interior conjunction token; otherwise halves the token
/// list (the first half takes the odd token). Single-token text is expanded
/// into two facets so the pair stays distinct.
pub fn stub_decompose(text: &str, conjunctions: &BTreeSet<String>) -> (String, String) {
    let tokens = tokenize(text).tokens;
    let n = tokens.len();
    if let Some(i) = (1..n.saturating_sub(1)).find(|&i| conjunctions.contains(&tokens[i])) {
        return (tokens[..i].join(" "), tokens[i + 1..].join(" "));
    }
    if n >= 2 {
        let mid = n.div_ceil(2);
        return (tokens[..mid].join(" "), tokens[mid..].join(" "));
    }
    let base = tokens
        .first()
        .cloned()
        .unwrap_or_else(|| text.trim().to_owned());
    (format!("{base} details"), format!("{base} options"))
}

fn coin(seed: u64, a: &str, b: &str) -> f64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed;
    for byte in a.bytes().chain([0xff]).chain(b.bytes()) {
        h ^= u64::from(byte);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    // Finalizer from splitmix64 to spread low-entropy inputs.
    h ^= h >> 30;
    h = h.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h ^= h >> 27;
    h = h.wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^= h >> 31;
    (h >> 11) as f64 / (1u64 << 53) as f64
}

/// Deterministic offline backend. Answers from the structured role inputs in
/// the same text format a remote model is asked to produce.
#[derive(Debug, Default)]
pub struct StubBackend {
    behavior: StubBehavior,
    observed: [AtomicUsize; 5],
}

impl StubBackend {
    pub fn new(behavior: StubBehavior) -> Self {
        Self {
            behavior,
            observed: Default::default(),
        }
    }

    pub fn behavior(&self) -> &StubBehavior {
        &self.behavior
    }

    /// Calls received for `role`, including failed ones.
    pub fn observed(&self, role: BackendRole) -> usize {
        self.observed[role.index()].load(Ordering::SeqCst)
    }

    pub fn observed_total(&self) -> usize {
        BackendRole::ALL.iter().map(|r| self.observed(*r)).sum()
    }

    fn answer(&self, input: &RoleInput<'_>) -> String {
        let b = &self.behavior;
        match *input {
            RoleInput::Decompose { text } => {
                let (a, c) = stub_decompose(text, &b.conjunctions);
                format!("1. {a}\n2. {c}")
            }
            RoleInput::Assess { qci, .. } => {
                let level = if qci < b.assessor_bands.0 {
                    SemanticLevel::Low
                } else if qci < b.assessor_bands.1 {
                    SemanticLevel::Mid
                } else {
                    SemanticLevel::High
                };
                format!("Complexity: {}", level.to_string().to_uppercase())
            }
            RoleInput::Judge {
                sub_query,
                passage,
                similarity,
                ..
            } => {
                let relevant = match b.judge {
                    JudgeRule::AlwaysRelevant => true,
                    JudgeRule::AlwaysIrrelevant => false,
                    JudgeRule::Threshold(t) => similarity >= t,
                    JudgeRule::Coin(p) => coin(b.seed, sub_query, &passage.id) < p,
                };
                if relevant { "Relevant" } else { "Irrelevant" }.to_owned()
            }
            RoleInput::Rerank { candidates, .. } => candidates
                .iter()
                .enumerate()
                .map(|(i, c)| format!("{}: {}", i + 1, c.score.clamp(0.0, 1.0)))
                .collect::<Vec<_>>()
                .join("\n"),
            RoleInput::Classify {
                evidence, catalog, ..
            } => {
                let labels: BTreeSet<&str> = evidence
                    .iter()
                    .flat_map(|e| e.passage.intent_labels.iter())
                    .filter(|l| catalog.contains(l))
                    .map(String::as_str)
                    .collect();
                if labels.is_empty() {
                    "none".to_owned()
                } else {
                    labels.into_iter().collect::<Vec<_>>().join(", ")
                }
            }
        }
    }
}

impl ChatBackend for StubBackend {
    fn chat(&self, call: &RoleCall<'_>) -> Result<String, String> {
        self.observed[call.role.index()].fetch_add(1, Ordering::SeqCst);
        if self.behavior.fail_roles.contains(&call.role) {
            return Err(format!("stub transport failure for {}", call.role));
        }
        if self.behavior.garbage_roles.contains(&call.role) {
            return Ok("~~ garbled ~~".to_owned());
        }
        Ok(self.answer(&call.input))
    }
}
