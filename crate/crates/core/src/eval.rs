//! Multi-label metrics, depth-stratified reports, and Pareto frontiers.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::QueryTrace;

pub type LabelSet = BTreeSet<String>;

fn check_lengths(preds: &[LabelSet], golds: &[LabelSet]) -> Result<()> {
    if preds.len() != golds.len() {
        return Err(Error::LengthMismatch {
            preds: preds.len(),
            golds: golds.len(),
        });
    }
    if preds.is_empty() {
        return Err(Error::EmptyInput("no predictions to score"));
    }
    Ok(())
}

/// Fraction of queries whose predicted set equals the gold set exactly.
pub fn subset_accuracy(preds: &[LabelSet], golds: &[LabelSet]) -> Result<f64> {
    check_lengths(preds, golds)?;
    let hits = preds.iter().zip(golds).filter(|(p, g)| p == g).count();
    Ok(hits as f64 / preds.len() as f64)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl Confusion {
    /// `2TP / (2TP + FP + FN)`; `None` when the denominator is zero.
    pub fn f1(&self) -> Option<f64> {
        let denom = 2 * self.tp + self.fp + self.fn_;
        (denom > 0).then(|| 2.0 * self.tp as f64 / denom as f64)
    }

    fn add(&mut self, pred: &LabelSet, gold: &LabelSet) {
        self.tp += pred.intersection(gold).count();
        self.fp += pred.difference(gold).count();
        self.fn_ += gold.difference(pred).count();
    }
}

/// F1 over pooled (query, label) decisions. All-empty inputs score 1.
pub fn micro_f1(preds: &[LabelSet], golds: &[LabelSet]) -> Result<f64> {
    check_lengths(preds, golds)?;
    let mut c = Confusion::default();
    for (p, g) in preds.iter().zip(golds) {
        c.add(p, g);
    }
    Ok(c.f1().unwrap_or(1.0))
}

/// How a catalog class with neither gold nor predicted occurrences is scored.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ZeroSupport {
    /// Counts as F1 = 1.
    #[default]
    One,
    /// Left out of the average.
    Exclude,
}

/// Unweighted mean of per-class F1 over `catalog`.
pub fn macro_f1(
    preds: &[LabelSet],
    golds: &[LabelSet],
    catalog: &[String],
    zero: ZeroSupport,
) -> Result<f64> {
    check_lengths(preds, golds)?;
    if catalog.is_empty() {
        return Err(Error::EmptyInput(
            "macro-F1 needs a nonempty intent catalog",
        ));
    }
    let mut per: BTreeMap<&str, Confusion> = catalog
        .iter()
        .map(|c| (c.as_str(), Confusion::default()))
        .collect();
    for (p, g) in preds.iter().zip(golds) {
        for l in p.union(g) {
            if let Some(c) = per.get_mut(l.as_str()) {
                match (p.contains(l), g.contains(l)) {
                    (true, true) => c.tp += 1,
                    (true, false) => c.fp += 1,
                    _ => c.fn_ += 1,
                }
            }
        }
    }
    let scores: Vec<f64> = per
        .values()
        .filter_map(|c| match (c.f1(), zero) {
            (Some(f), _) => Some(f),
            (None, ZeroSupport::One) => Some(1.0),
            (None, ZeroSupport::Exclude) => None,
        })
        .collect();
    if scores.is_empty() {
        return Ok(1.0);
    }
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

/// `Σ shareᵢ · valueᵢ`.
pub fn weighted_average(shares: &[f64], values: &[f64]) -> f64 {
    shares.iter().zip(values).map(|(s, v)| s * v).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthBucket {
    pub depth: u8,
    pub queries: usize,
    pub query_share: f64,
    pub subset_acc: f64,
    pub micro_f1: f64,
    pub mean_latency_ms: f64,
    pub mean_prompt_tokens: f64,
    pub mean_calls: f64,
}

/// Share-weighted means for the per-query columns; micro-F1 recomputed over
/// every query, since it does not decompose linearly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthReport {
    pub buckets: Vec<DepthBucket>,
    pub weighted: DepthBucketAggregate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthBucketAggregate {
    pub queries: usize,
    pub subset_acc: f64,
    pub micro_f1: f64,
    pub mean_latency_ms: f64,
    pub mean_prompt_tokens: f64,
    pub mean_calls: f64,
    pub mean_depth: f64,
}

fn gold_for<'a>(golds: &'a BTreeMap<String, LabelSet>, id: &str) -> Result<&'a LabelSet> {
    golds
        .get(id)
        .ok_or_else(|| Error::MissingGold(id.to_owned()))
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

pub fn depth_report(
    traces: &[QueryTrace],
    golds: &BTreeMap<String, LabelSet>,
) -> Result<DepthReport> {
    if traces.is_empty() {
        return Err(Error::EmptyInput("no traces to report"));
    }
    let mut by_depth: BTreeMap<u8, Vec<&QueryTrace>> = BTreeMap::new();
    for t in traces {
        by_depth.entry(t.depth).or_default().push(t);
    }
    let n = traces.len() as f64;
    let mut buckets = Vec::new();
    for (depth, ts) in by_depth {
        let preds: Vec<LabelSet> = ts.iter().map(|t| t.predicted_intents.clone()).collect();
        let gs: Vec<LabelSet> = ts
            .iter()
            .map(|t| gold_for(golds, &t.query_id).cloned())
            .collect::<Result<_>>()?;
        buckets.push(DepthBucket {
            depth,
            queries: ts.len(),
            query_share: ts.len() as f64 / n,
            subset_acc: subset_accuracy(&preds, &gs)?,
            micro_f1: micro_f1(&preds, &gs)?,
            mean_latency_ms: mean(ts.iter().map(|t| t.ledger.latency_ms)),
            mean_prompt_tokens: mean(ts.iter().map(|t| t.ledger.prompt_tokens as f64)),
            mean_calls: mean(ts.iter().map(|t| t.ledger.total_calls as f64)),
        });
    }
    let shares: Vec<f64> = buckets.iter().map(|b| b.query_share).collect();
    let col = |f: fn(&DepthBucket) -> f64| {
        weighted_average(&shares, &buckets.iter().map(f).collect::<Vec<_>>())
    };
    let preds: Vec<LabelSet> = traces.iter().map(|t| t.predicted_intents.clone()).collect();
    let gs: Vec<LabelSet> = traces
        .iter()
        .map(|t| gold_for(golds, &t.query_id).cloned())
        .collect::<Result<_>>()?;
    let weighted = DepthBucketAggregate {
        queries: traces.len(),
        subset_acc: col(|b| b.subset_acc),
        micro_f1: micro_f1(&preds, &gs)?,
        mean_latency_ms: col(|b| b.mean_latency_ms),
        mean_prompt_tokens: col(|b| b.mean_prompt_tokens),
        mean_calls: col(|b| b.mean_calls),
        mean_depth: col(|b| f64::from(b.depth)),
    };
    Ok(DepthReport { buckets, weighted })
}

impl DepthReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "depth,queries,query_share,subset_acc,micro_f1,mean_latency_ms,mean_prompt_tokens,mean_calls\n",
        );
        for b in &self.buckets {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                b.depth,
                b.queries,
                b.query_share,
                b.subset_acc,
                b.micro_f1,
                b.mean_latency_ms,
                b.mean_prompt_tokens,
                b.mean_calls
            );
        }
        let w = &self.weighted;
        let _ = writeln!(
            out,
            "weighted,{},1,{},{},{},{},{}",
            w.queries,
            w.subset_acc,
            w.micro_f1,
            w.mean_latency_ms,
            w.mean_prompt_tokens,
            w.mean_calls
        );
        out
    }
}

/// Run-level metrics keyed by name, plus the depth table when traces were
/// available. Hand-written reports may carry only `label` and `metrics`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub label: String,
    pub metrics: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<DepthReport>,
}

pub fn evaluate(
    label: &str,
    traces: &[QueryTrace],
    golds: &BTreeMap<String, LabelSet>,
    catalog: &[String],
    zero: ZeroSupport,
) -> Result<EvalReport> {
    let depth = depth_report(traces, golds)?;
    let preds: Vec<LabelSet> = traces.iter().map(|t| t.predicted_intents.clone()).collect();
    let gs: Vec<LabelSet> = traces
        .iter()
        .map(|t| gold_for(golds, &t.query_id).cloned())
        .collect::<Result<_>>()?;
    let w = &depth.weighted;
    let metrics = BTreeMap::from([
        ("queries".to_owned(), traces.len() as f64),
        (
            "failed".to_owned(),
            traces.iter().filter(|t| t.failed()).count() as f64,
        ),
        ("subset_accuracy".to_owned(), subset_accuracy(&preds, &gs)?),
        ("micro_f1".to_owned(), w.micro_f1),
        ("macro_f1".to_owned(), macro_f1(&preds, &gs, catalog, zero)?),
        (
            "mean_latency_ms".to_owned(),
            mean(traces.iter().map(|t| t.ledger.latency_ms)),
        ),
        (
            "mean_calls".to_owned(),
            mean(traces.iter().map(|t| t.ledger.total_calls as f64)),
        ),
        (
            "mean_prompt_tokens".to_owned(),
            mean(traces.iter().map(|t| t.ledger.prompt_tokens as f64)),
        ),
        (
            "mean_depth".to_owned(),
            mean(traces.iter().map(|t| f64::from(t.depth))),
        ),
    ]);
    Ok(EvalReport {
        label: label.to_owned(),
        metrics,
        depth: Some(depth),
    })
}

impl EvalReport {
    /// Projects the report onto the named axes.
    pub fn point(&self, accuracy: &[String], cost: &[String]) -> Result<ParetoPoint> {
        let pick = |names: &[String]| -> Result<BTreeMap<String, f64>> {
            names
                .iter()
                .map(|n| {
                    self.metrics.get(n).map(|v| (n.clone(), *v)).ok_or_else(|| {
                        Error::AxisMismatch(format!("{} (no metric `{n}`)", self.label))
                    })
                })
                .collect()
        };
        Ok(ParetoPoint {
            label: self.label.clone(),
            accuracy_axes: pick(accuracy)?,
            cost_axes: pick(cost)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint {
    pub label: String,
    /// Maximized.
    pub accuracy_axes: BTreeMap<String, f64>,
    /// Minimized.
    pub cost_axes: BTreeMap<String, f64>,
}

/// `q` is no worse than `p` on every axis and strictly better on one.
/// Both points must share axes.
pub fn dominates(q: &ParetoPoint, p: &ParetoPoint) -> bool {
    let mut strict = false;
    for (k, pv) in &p.accuracy_axes {
        let qv = q.accuracy_axes[k];
        if qv < *pv {
            return false;
        }
        strict |= qv > *pv;
    }
    for (k, pv) in &p.cost_axes {
        let qv = q.cost_axes[k];
        if qv > *pv {
            return false;
        }
        strict |= qv < *pv;
    }
    strict
}

fn check_axes(points: &[ParetoPoint]) -> Result<()> {
    let first = points.first().ok_or(Error::EmptyInput(
        "pareto frontier needs at least one point",
    ))?;
    for p in points {
        let same = |a: &BTreeMap<String, f64>, b: &BTreeMap<String, f64>| a.keys().eq(b.keys());
        if !same(&p.accuracy_axes, &first.accuracy_axes) || !same(&p.cost_axes, &first.cost_axes) {
            return Err(Error::AxisMismatch(p.label.clone()));
        }
    }
    Ok(())
}

/// Non-dominated points in input order.
pub fn pareto_frontier(points: &[ParetoPoint]) -> Result<Vec<ParetoPoint>> {
    check_axes(points)?;
    Ok(points
        .iter()
        .filter(|p| !points.iter().any(|q| dominates(q, p)))
        .cloned()
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dominated {
    pub label: String,
    pub dominated_by: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierReport {
    pub points: Vec<ParetoPoint>,
    pub frontier: Vec<String>,
    pub dominated: Vec<Dominated>,
}

pub fn frontier_report(points: Vec<ParetoPoint>) -> Result<FrontierReport> {
    let frontier = pareto_frontier(&points)?
        .into_iter()
        .map(|p| p.label)
        .collect();
    let dominated = points
        .iter()
        .filter_map(|p| {
            let by: Vec<String> = points
                .iter()
                .filter(|q| dominates(q, p))
                .map(|q| q.label.clone())
                .collect();
            (!by.is_empty()).then(|| Dominated {
                label: p.label.clone(),
                dominated_by: by,
            })
        })
        .collect();
    Ok(FrontierReport {
        points,
        frontier,
        dominated,
    })
}

impl FrontierReport {
    pub fn to_csv(&self) -> String {
        let Some(first) = self.points.first() else {
            return String::from("label,on_frontier\n");
        };
        let mut out = String::from("label,on_frontier");
        for k in first.accuracy_axes.keys().chain(first.cost_axes.keys()) {
            let _ = write!(out, ",{k}");
        }
        out.push('\n');
        for p in &self.points {
            let on = self.frontier.contains(&p.label);
            let _ = write!(out, "{},{on}", p.label.replace(',', ";"));
            for v in p.accuracy_axes.values().chain(p.cost_axes.values()) {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }
}
