//! Query routing: Simple / Hybrid / Tree mode selection and depth assignment.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lingsig::{
    compute_qci, extract_signals, QciWeights, SignalLexicons, SignalVector, TokenizedQuery,
};

/// Hard cap on tree exploration depth.
pub const MAX_DEPTH: u8 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RouteMode {
    Simple,
    Hybrid,
    Tree,
}

impl fmt::Display for RouteMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            RouteMode::Simple => "Simple",
            RouteMode::Hybrid => "Hybrid",
            RouteMode::Tree => "Tree",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SemanticLevel {
    Low,
    Mid,
    High,
}

impl fmt::Display for SemanticLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SemanticLevel::Low => "Low",
            SemanticLevel::Mid => "Mid",
            SemanticLevel::High => "High",
        };
        f.write_str(s)
    }
}

impl FromStr for SemanticLevel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "low" => Ok(SemanticLevel::Low),
            "mid" | "medium" => Ok(SemanticLevel::Mid),
            "high" => Ok(SemanticLevel::High),
            other => Err(format!("unknown semantic level `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingDecision {
    pub mode: RouteMode,
    pub qci: f64,
    pub signals: SignalVector,
    pub level: Option<SemanticLevel>,
    pub depth: u8,
    /// Set when the assessor answered but its level could not be parsed.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub level_fallback: bool,
}

/// Simple iff `qci < tau_simple` with no conjunction and no comparison; Tree iff
/// either of those two signals fired; Hybrid covers the remainder.
pub fn route(sv: &SignalVector, qci: f64, tau_simple: f64) -> RouteMode {
    if sv.has_conjunction() || sv.has_comparison() {
        RouteMode::Tree
    } else if qci < tau_simple {
        RouteMode::Simple
    } else {
        RouteMode::Hybrid
    }
}

pub fn assign_depth(mode: RouteMode, level: Option<SemanticLevel>) -> Result<u8> {
    match (mode, level) {
        (RouteMode::Simple | RouteMode::Hybrid, None) => Ok(0),
        (RouteMode::Tree, Some(SemanticLevel::Low)) => Ok(1),
        (RouteMode::Tree, Some(SemanticLevel::Mid)) => Ok(2),
        (RouteMode::Tree, Some(SemanticLevel::High)) => Ok(3),
        (RouteMode::Tree, None) => Err(Error::DepthAssignment(
            "Tree mode requires a semantic level".into(),
        )),
        (m, Some(l)) => Err(Error::DepthAssignment(format!(
            "{m} mode must not carry a semantic level (got {l})"
        ))),
    }
}

/// Backend seam for the second-stage complexity assessment of Tree-mode queries.
///
/// `Ok(None)` means the backend answered but no level could be parsed.
pub trait LevelAssessor {
    fn assess(
        &self,
        query: &TokenizedQuery,
        context_snippets: &[String],
        mode: RouteMode,
        qci: f64,
    ) -> Result<Option<SemanticLevel>>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct Router {
    pub lexicons: SignalLexicons,
    pub weights: QciWeights,
    pub length_threshold: usize,
    pub tau_simple: f64,
    pub fallback_level: SemanticLevel,
}

impl Default for Router {
    fn default() -> Self {
        Self {
            lexicons: SignalLexicons::default(),
            weights: QciWeights::default(),
            length_threshold: 25,
            tau_simple: 0.10,
            fallback_level: SemanticLevel::Mid,
        }
    }
}

impl Router {
    pub fn signals(&self, query: &TokenizedQuery) -> (SignalVector, f64) {
        let sv = extract_signals(query, &self.lexicons, self.length_threshold);
        let qci = compute_qci(&sv, &self.weights);
        (sv, qci)
    }

    /// Rule-based routing only; never consults a backend.
    pub fn initial_mode(&self, query: &TokenizedQuery) -> (SignalVector, f64, RouteMode) {
        let (sv, qci) = self.signals(query);
        (sv, qci, route(&sv, qci, self.tau_simple))
    }

    /// Full routing decision. The assessor is called exactly once for Tree-mode
    /// queries and never otherwise.
    pub fn decide(
        &self,
        query_id: &str,
        query: &TokenizedQuery,
        context_snippets: &[String],
        assessor: &dyn LevelAssessor,
    ) -> Result<RoutingDecision> {
        let (signals, qci, mode) = self.initial_mode(query);
        let (level, level_fallback) = if mode == RouteMode::Tree {
            let assessed = assessor
                .assess(query, context_snippets, mode, qci)
                .map_err(|e| Error::Routing {
                    query_id: query_id.to_owned(),
                    source: Box::new(e),
                })?;
            match assessed {
                Some(l) => (Some(l), false),
                None => (Some(self.fallback_level), true),
            }
        } else {
            (None, false)
        };
        let depth = assign_depth(mode, level)?;
        Ok(RoutingDecision {
            mode,
            qci,
            signals,
            level,
            depth,
            level_fallback,
        })
    }
}
