//! Evidence consolidation for tree-path queries: deduplicate, rescore globally
//! against the original query in one reranker call, then dual-threshold top-K.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::backends::{BackendRole, Roles};
use crate::embedstore::{cosine, rank_order, PassageEmbeddings, ScoreKind, ScoredPassage};
use crate::error::{Error, Result};
use crate::pipeline::CallLedger;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DedupPolicy {
    pub near_dup_threshold: f64,
}

impl Default for DedupPolicy {
    fn default() -> Self {
        Self {
            near_dup_threshold: 0.95,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionRule {
    pub top_rank: usize,
    pub score_floor: f64,
    pub cap: usize,
    /// Use `score > floor` instead of `score >= floor`.
    pub floor_strict: bool,
}

impl Default for SelectionRule {
    fn default() -> Self {
        Self {
            top_rank: 10,
            score_floor: 0.70,
            cap: 10,
            floor_strict: false,
        }
    }
}

impl SelectionRule {
    pub fn validate(&self) -> Result<()> {
        if self.cap < 1 {
            return Err(Error::config("rrl.cap", "cap must be at least 1"));
        }
        if self.top_rank > self.cap {
            return Err(Error::config(
                "rrl.top_rank",
                format!(
                    "top_rank ({}) must not exceed cap ({})",
                    self.top_rank, self.cap
                ),
            ));
        }
        if !(0.0..=1.0).contains(&self.score_floor) {
            return Err(Error::config("rrl.score_floor", "floor must lie in [0, 1]"));
        }
        Ok(())
    }

    fn passes_floor(&self, score: f64) -> bool {
        if self.floor_strict {
            score > self.score_floor
        } else {
            score >= self.score_floor
        }
    }
}

impl DedupPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.near_dup_threshold > 0.0 && self.near_dup_threshold <= 1.0) {
            return Err(Error::config(
                "rrl.near_dup_threshold",
                "threshold must lie in (0, 1]",
            ));
        }
        Ok(())
    }
}

/// Lowercase and collapse whitespace runs.
pub fn normalize_text(text: &str) -> String {
    text.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Two tiers: exact matches after [`normalize_text`], then greedy near-duplicate
/// merging by embedding cosine in rank order. A merge always keeps the member
/// ranked higher (score, then lower id). Output is in rank order.
pub fn deduplicate(
    candidates: Vec<ScoredPassage>,
    policy: &DedupPolicy,
    embeddings: &dyn PassageEmbeddings,
) -> Result<Vec<ScoredPassage>> {
    let mut best: HashMap<String, ScoredPassage> = HashMap::new();
    for c in candidates {
        let key = normalize_text(&c.passage.text);
        match best.get(&key) {
            Some(kept) if rank_order(kept, &c).is_le() => {}
            _ => {
                best.insert(key, c);
            }
        }
    }
    let mut ranked: Vec<ScoredPassage> = best.into_values().collect();
    ranked.sort_by(rank_order);

    let mut kept: Vec<(
        ScoredPassage,
        std::borrow::Cow<'_, crate::embedstore::Embedding>,
    )> = Vec::with_capacity(ranked.len());
    for c in ranked {
        let e = embeddings.passage_embedding(&c.passage)?;
        let mut near_dup = false;
        for (_, ke) in &kept {
            if cosine(&e, ke)? >= policy.near_dup_threshold {
                near_dup = true;
                break;
            }
        }
        if !near_dup {
            kept.push((c, e));
        }
    }
    Ok(kept.into_iter().map(|(c, _)| c).collect())
}

/// Rescores every candidate against the original query with a single batched
/// reranker call (none for an empty list).
pub fn global_rescore(
    roles: &Roles,
    ledger: &CallLedger,
    query_id: &str,
    original_query: &str,
    candidates: Vec<ScoredPassage>,
) -> Vec<ScoredPassage> {
    if candidates.is_empty() {
        return candidates;
    }
    let scores = roles.rerank(ledger, query_id, original_query, &candidates);
    candidates
        .into_iter()
        .zip(scores)
        .map(|(c, s)| ScoredPassage {
            score: s.clamp(0.0, 1.0),
            kind: ScoreKind::Rerank,
            ..c
        })
        .collect()
}

/// Union of the top `top_rank` and everything at or above the floor, then the
/// `cap` best of that union, in rank order.
pub fn select_topk(scored: Vec<ScoredPassage>, rule: &SelectionRule) -> Vec<ScoredPassage> {
    let mut ranked = scored;
    ranked.sort_by(rank_order);
    ranked
        .into_iter()
        .enumerate()
        .filter(|(rank, c)| *rank < rule.top_rank || rule.passes_floor(c.score))
        .map(|(_, c)| c)
        .take(rule.cap)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Consolidated {
    pub evidence: Vec<ScoredPassage>,
    /// Passages sent to the reranker (after deduplication).
    pub reranked: usize,
    pub reranker_calls: usize,
}

pub struct Consolidator<'a> {
    pub policy: DedupPolicy,
    pub rule: SelectionRule,
    pub embeddings: &'a dyn PassageEmbeddings,
    pub roles: &'a Roles,
}

impl Consolidator<'_> {
    /// deduplicate, then global_rescore, then select_topk.
    pub fn consolidate(
        &self,
        ledger: &CallLedger,
        query_id: &str,
        original_query: &str,
        evidence: Vec<ScoredPassage>,
    ) -> Result<Consolidated> {
        let before = ledger.calls(BackendRole::Reranker);
        let unique = deduplicate(evidence, &self.policy, self.embeddings)?;
        let reranked = unique.len();
        let rescored = global_rescore(self.roles, ledger, query_id, original_query, unique);
        Ok(Consolidated {
            evidence: select_topk(rescored, &self.rule),
            reranked,
            reranker_calls: ledger.calls(BackendRole::Reranker) - before,
        })
    }
}
