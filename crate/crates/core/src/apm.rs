//! Node-local candidate pruning: a cosine gate against the original query,
//! with an LLM judge consulted only for the borderline band.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backends::{Roles, Verdict};
use crate::embedstore::{cosine, Embedding, Passage, PassageEmbeddings, ScoredPassage};
use crate::error::{Error, Result};
use crate::pipeline::CallLedger;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateThresholds {
    pub hi: f64,
    pub lo: f64,
}

impl Default for GateThresholds {
    fn default() -> Self {
        Self { hi: 0.70, lo: 0.35 }
    }
}

impl GateThresholds {
    /// `lo == hi` is accepted and leaves no borderline band; `hi = lo = -1`
    /// retains every candidate, since cosine never drops below -1.
    pub fn validate(&self) -> Result<()> {
        if !(-1.0 <= self.lo && self.lo <= self.hi && self.hi <= 1.0) {
            return Err(Error::config(
                "apm.lo",
                format!(
                    "thresholds must satisfy -1 <= lo <= hi <= 1 (lo={}, hi={})",
                    self.lo, self.hi
                ),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateOutcome {
    Retain,
    Discard,
    Borderline,
}

pub fn quantitative_gate(sim: f64, t: &GateThresholds) -> GateOutcome {
    if sim >= t.hi {
        GateOutcome::Retain
    } else if sim < t.lo {
        GateOutcome::Discard
    } else {
        GateOutcome::Borderline
    }
}

/// Second-stage relevance verdict for a borderline candidate.
pub trait RelevanceJudge: Sync {
    fn judge(&self, ctx: &PruneContext<'_>, passage: &Passage, similarity: f64) -> Verdict;
}

impl RelevanceJudge for Roles {
    fn judge(&self, ctx: &PruneContext<'_>, passage: &Passage, similarity: f64) -> Verdict {
        Roles::judge(
            self,
            ctx.ledger,
            ctx.query_id,
            ctx.original_query,
            ctx.sub_query,
            passage,
            similarity,
        )
    }
}

pub struct PruneContext<'a> {
    pub query_id: &'a str,
    pub original_query: &'a str,
    pub original_embedding: &'a Embedding,
    pub sub_query: &'a str,
    pub ledger: &'a CallLedger,
}

/// Binary semantic gate. Unparseable or failed judge calls retain (see [`Roles::judge`]).
pub fn semantic_gate(
    ctx: &PruneContext<'_>,
    passage: &Passage,
    similarity: f64,
    judge: &dyn RelevanceJudge,
) -> GateOutcome {
    match judge.judge(ctx, passage, similarity) {
        Verdict::Relevant => GateOutcome::Retain,
        Verdict::Irrelevant => GateOutcome::Discard,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pruned {
    pub survivors: Vec<ScoredPassage>,
    pub judge_calls: usize,
}

/// Filters `candidates`, preserving input order. Exactly one judge call is made
/// per borderline candidate and none otherwise. Borderline candidates are
/// judged in parallel when `parallel` is set.
pub fn prune(
    ctx: &PruneContext<'_>,
    candidates: Vec<ScoredPassage>,
    embeddings: &dyn PassageEmbeddings,
    thresholds: &GateThresholds,
    judge: &dyn RelevanceJudge,
    parallel: bool,
) -> Result<Pruned> {
    let gated = candidates
        .into_iter()
        .map(|c| {
            let e = embeddings.passage_embedding(&c.passage)?;
            let sim = cosine(ctx.original_embedding, &e)?;
            Ok((c, sim, quantitative_gate(sim, thresholds)))
        })
        .collect::<Result<Vec<_>>>()?;
    let judge_calls = gated
        .iter()
        .filter(|(_, _, g)| *g == GateOutcome::Borderline)
        .count();
    let resolve = |(c, sim, g): (ScoredPassage, f64, GateOutcome)| match g {
        GateOutcome::Borderline => {
            (semantic_gate(ctx, &c.passage, sim, judge) == GateOutcome::Retain).then_some(c)
        }
        GateOutcome::Retain => Some(c),
        GateOutcome::Discard => None,
    };
    let survivors: Vec<ScoredPassage> = if parallel && judge_calls > 1 {
        gated.into_par_iter().filter_map(resolve).collect()
    } else {
        gated.into_iter().filter_map(resolve).collect()
    };
    Ok(Pruned {
        survivors,
        judge_calls,
    })
}

/// Node-level filter used during tree expansion.
pub trait Pruner: Sync {
    fn prune(&self, ctx: &PruneContext<'_>, candidates: Vec<ScoredPassage>) -> Result<Pruned>;
}

/// The two-stage gate bound to an embedding source and a judge.
pub struct Apm<'a> {
    pub thresholds: GateThresholds,
    pub embeddings: &'a dyn PassageEmbeddings,
    pub judge: &'a dyn RelevanceJudge,
    pub parallel: bool,
}

impl Pruner for Apm<'_> {
    fn prune(&self, ctx: &PruneContext<'_>, candidates: Vec<ScoredPassage>) -> Result<Pruned> {
        prune(
            ctx,
            candidates,
            self.embeddings,
            &self.thresholds,
            self.judge,
            self.parallel,
        )
    }
}

/// Retains everything without judging.
pub struct KeepAll;

impl Pruner for KeepAll {
    fn prune(&self, _: &PruneContext<'_>, candidates: Vec<ScoredPassage>) -> Result<Pruned> {
        Ok(Pruned {
            survivors: candidates,
            judge_calls: 0,
        })
    }
}
