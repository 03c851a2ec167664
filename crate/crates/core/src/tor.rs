//! Tree-of-Retrieval: level-by-level binary decomposition with retrieval and
//! pruning at every new node.
//!
//! Node ids are dotted paths (`0`, `0.0`, `0.1`, `0.0.1`, ...), so sorting by id
//! gives a depth-first order that does not depend on scheduling.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::apm::{PruneContext, Pruner};
use crate::backends::Roles;
use crate::embedstore::{embed, Embedding, EmbeddingProvider, ScoredPassage, VectorStore};
use crate::error::{Error, Result};
use crate::pipeline::CallLedger;
use crate::qtc::MAX_DEPTH;

pub const ROOT_ID: &str = "0";

#[derive(Debug, Clone, PartialEq)]
pub struct QueryNode {
    pub id: String,
    pub text: String,
    pub depth_level: u8,
    pub parent_id: Option<String>,
    pub child_ids: Vec<String>,
    pub candidates: Vec<ScoredPassage>,
    pub pruned: bool,
}

impl QueryNode {
    pub fn is_leaf(&self) -> bool {
        self.child_ids.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalTree {
    pub root_id: String,
    pub nodes: BTreeMap<String, QueryNode>,
    pub max_depth: u8,
    pub judge_calls: usize,
    /// Successful decompositions, i.e. internal nodes.
    pub decompose_calls: usize,
    /// Nodes whose decomposition failed; they are marked pruned.
    pub decompose_failures: usize,
}

impl RetrievalTree {
    pub fn root(&self) -> &QueryNode {
        &self.nodes[&self.root_id]
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.values().filter(|n| n.is_leaf()).count()
    }

    pub fn internal_count(&self) -> usize {
        self.nodes.values().filter(|n| !n.is_leaf()).count()
    }

    pub fn pruned_count(&self) -> usize {
        self.nodes.values().filter(|n| n.pruned).count()
    }

    /// Indented outline of the tree, one node per line.
    pub fn outline(&self) -> String {
        self.nodes
            .values()
            .map(|n| {
                format!(
                    "{}{} [{}{}] {}",
                    "  ".repeat(n.depth_level as usize),
                    n.id,
                    n.candidates.len(),
                    if n.pruned { ", pruned" } else { "" },
                    n.text
                )
            })
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TreeSummary {
    pub nodes: usize,
    pub leaves: usize,
    pub pruned: usize,
}

/// Produces the two sub-queries for a node.
pub trait Decomposer: Sync {
    fn decompose(
        &self,
        ctx: &TreeContext<'_>,
        node_id: &str,
        text: &str,
    ) -> Result<(String, String)>;
}

impl Decomposer for Roles {
    fn decompose(
        &self,
        ctx: &TreeContext<'_>,
        node_id: &str,
        text: &str,
    ) -> Result<(String, String)> {
        Roles::decompose(self, ctx.ledger, ctx.query_id, node_id, text)
    }
}

pub struct TreeContext<'a> {
    pub query_id: &'a str,
    pub original_query: &'a str,
    pub original_embedding: &'a Embedding,
    pub ledger: &'a CallLedger,
}

pub struct TreeBuilder<'a> {
    pub store: &'a VectorStore,
    pub embedder: &'a dyn EmbeddingProvider,
    pub pruner: &'a dyn Pruner,
    pub decomposer: &'a dyn Decomposer,
    pub k: usize,
    /// Process sibling nodes of one level concurrently.
    pub parallel: bool,
}

struct Expansion {
    parent: String,
    children: Option<[QueryNode; 2]>,
    judge_calls: usize,
}

impl TreeBuilder<'_> {
    fn retrieve(&self, ctx: &TreeContext<'_>, text: &str) -> Result<Vec<ScoredPassage>> {
        ctx.ledger.record_retrieval();
        let q = embed(text, self.embedder)?;
        self.store.search(&q, self.k)
    }

    fn child(
        &self,
        ctx: &TreeContext<'_>,
        id: String,
        text: String,
        parent: &QueryNode,
    ) -> Result<(QueryNode, usize)> {
        let wrap = |e: Error| Error::Node {
            node: id.clone(),
            source: Box::new(e),
        };
        let retrieved = self.retrieve(ctx, &text).map_err(wrap)?;
        let pctx = PruneContext {
            query_id: ctx.query_id,
            original_query: ctx.original_query,
            original_embedding: ctx.original_embedding,
            sub_query: &text,
            ledger: ctx.ledger,
        };
        let pruned = self.pruner.prune(&pctx, retrieved).map_err(wrap)?;
        let node = QueryNode {
            pruned: pruned.survivors.is_empty(),
            id,
            text,
            depth_level: parent.depth_level + 1,
            parent_id: Some(parent.id.clone()),
            child_ids: Vec::new(),
            candidates: pruned.survivors,
        };
        Ok((node, pruned.judge_calls))
    }

    fn expand_node(&self, ctx: &TreeContext<'_>, node: &QueryNode) -> Result<Expansion> {
        let (a, b) = match self.decomposer.decompose(ctx, &node.id, &node.text) {
            Ok(pair) => pair,
            Err(e) => {
                ctx.ledger.warn(format!(
                    "{}: node {} not expanded: {e}",
                    ctx.query_id, node.id
                ));
                return Ok(Expansion {
                    parent: node.id.clone(),
                    children: None,
                    judge_calls: 0,
                });
            }
        };
        let (left, jl) = self.child(ctx, format!("{}.0", node.id), a, node)?;
        let (right, jr) = self.child(ctx, format!("{}.1", node.id), b, node)?;
        Ok(Expansion {
            parent: node.id.clone(),
            children: Some([left, right]),
            judge_calls: jl + jr,
        })
    }

    /// Builds the tree to depth `depth`. The root keeps `root_candidates` when
    /// given (already retrieved for the original query), otherwise it retrieves
    /// its own top-k. Root candidates are not pruned.
    pub fn expand(
        &self,
        ctx: &TreeContext<'_>,
        root_query: &str,
        root_candidates: Option<Vec<ScoredPassage>>,
        depth: u8,
    ) -> Result<RetrievalTree> {
        if !(1..=MAX_DEPTH).contains(&depth) {
            return Err(Error::DepthAssignment(format!(
                "tree depth must be within 1..={MAX_DEPTH}, got {depth}"
            )));
        }
        let candidates = match root_candidates {
            Some(c) => c,
            None => self.retrieve(ctx, root_query).map_err(|e| Error::Node {
                node: ROOT_ID.into(),
                source: Box::new(e),
            })?,
        };
        let root = QueryNode {
            id: ROOT_ID.into(),
            text: root_query.to_owned(),
            depth_level: 0,
            parent_id: None,
            child_ids: Vec::new(),
            candidates,
            pruned: false,
        };
        let mut tree = RetrievalTree {
            root_id: ROOT_ID.into(),
            nodes: BTreeMap::from([(ROOT_ID.to_owned(), root)]),
            max_depth: depth,
            judge_calls: 0,
            decompose_calls: 0,
            decompose_failures: 0,
        };

        let mut frontier = vec![ROOT_ID.to_owned()];
        for _level in 0..depth {
            let open: Vec<&QueryNode> = frontier
                .iter()
                .map(|id| &tree.nodes[id])
                .filter(|n| !n.pruned)
                .collect();
            let expansions: Vec<Expansion> = if self.parallel {
                open.par_iter()
                    .map(|n| self.expand_node(ctx, n))
                    .collect::<Result<_>>()?
            } else {
                open.iter()
                    .map(|n| self.expand_node(ctx, n))
                    .collect::<Result<_>>()?
            };

            let mut next = Vec::new();
            for exp in expansions {
                tree.judge_calls += exp.judge_calls;
                let parent = tree.nodes.get_mut(&exp.parent).expect("parent exists");
                match exp.children {
                    Some(children) => {
                        tree.decompose_calls += 1;
                        parent.child_ids = children.iter().map(|c| c.id.clone()).collect();
                        for child in children {
                            next.push(child.id.clone());
                            tree.nodes.insert(child.id.clone(), child);
                        }
                    }
                    None => {
                        tree.decompose_failures += 1;
                        parent.pruned = true;
                    }
                }
            }
            frontier = next;
        }
        Ok(tree)
    }
}

/// Candidates of every non-pruned node, in node-id order then rank order.
/// Duplicates across nodes are kept.
pub fn collect_evidence(tree: &RetrievalTree) -> Vec<ScoredPassage> {
    tree.nodes
        .values()
        .filter(|n| !n.pruned)
        .flat_map(|n| n.candidates.iter().cloned())
        .collect()
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::apm::{KeepAll, Pruned};
    use crate::backends::{StubBackend, StubBehavior};
    use crate::embedstore::{Passage, StubEmbedder};

    fn store(embedder: &StubEmbedder) -> VectorStore {
        let texts = [
            "compare savings interest rates",
            "recommend the best account option",
            "apply online for an account",
            "block a lost card",
            "book a hotel room",
        ];
        let passages = texts
            .iter()
            .enumerate()
            .map(|(i, t)| Passage::new(format!("kb{i}"), *t))
            .collect();
        VectorStore::build(passages, embedder).unwrap()
    }

    /// Prunes every node whose id is listed.
    struct PruneIds(Vec<&'static str>);

    impl Pruner for PruneIds {
        fn prune(&self, ctx: &PruneContext<'_>, c: Vec<ScoredPassage>) -> Result<Pruned> {
            // The sub-query text identifies the node in these tests.
            let kill = self.0.contains(&ctx.sub_query);
            Ok(Pruned {
                survivors: if kill { vec![] } else { c },
                judge_calls: 0,
            })
        }
    }

    fn build(depth: u8, pruner: &dyn Pruner, parallel: bool) -> RetrievalTree {
        let emb = StubEmbedder::new(64, 1);
        let st = store(&emb);
        let roles = Roles::new(Arc::new(StubBackend::new(StubBehavior::default())));
        let ledger = CallLedger::new();
        let q = "compare interest rates and recommend the best option";
        let qe = embed(q, &emb).unwrap();
        let ctx = TreeContext {
            query_id: "q",
            original_query: q,
            original_embedding: &qe,
            ledger: &ledger,
        };
        let b = TreeBuilder {
            store: &st,
            embedder: &emb,
            pruner,
            decomposer: &roles,
            k: 32,
            parallel,
        };
        let tree = b.expand(&ctx, q, None, depth).unwrap();
        assert_eq!(
            ledger.calls(crate::backends::BackendRole::Decomposer),
            tree.decompose_calls
        );
        tree
    }

    #[test]
    fn full_trees_have_expected_shape() {
        for (d, nodes, leaves, calls) in [(1u8, 3, 2, 1), (2, 7, 4, 3), (3, 15, 8, 7)] {
            let t = build(d, &KeepAll, false);
            assert_eq!(t.node_count(), nodes, "d={d}");
            assert_eq!(t.leaf_count(), leaves, "d={d}");
            assert_eq!(t.decompose_calls, calls, "d={d}");
            assert_eq!(t.internal_count(), calls);
            assert!(t.nodes.values().all(|n| n.depth_level <= d));
            assert!(t.nodes.values().all(|n| n.candidates.len() <= 32));
        }
    }

    #[test]
    fn first_level_split_follows_conjunction() {
        let t = build(1, &KeepAll, false);
        assert_eq!(t.nodes["0.0"].text, "compare interest rates");
        assert_eq!(t.nodes["0.1"].text, "recommend the best option");
    }

    #[test]
    fn pruned_children_are_not_expanded() {
        let p = PruneIds(vec!["compare interest rates", "recommend the best option"]);
        let t = build(2, &p, false);
        assert_eq!(t.node_count(), 3);
        assert_eq!(t.decompose_calls, 1);
        assert_eq!(t.pruned_count(), 2);
        assert!(t.nodes.values().all(|n| n.depth_level < 2));
        assert!(t.nodes.values().filter(|n| n.pruned).all(|n| n.is_leaf()));
    }

    #[test]
    fn parallel_matches_sequential() {
        assert_eq!(build(3, &KeepAll, true), build(3, &KeepAll, false));
    }

    #[test]
    fn depth_out_of_range_rejected() {
        let emb = StubEmbedder::new(16, 1);
        let st = store(&emb);
        let roles = Roles::new(Arc::new(StubBackend::default()));
        let ledger = CallLedger::new();
        let qe = embed("x", &emb).unwrap();
        let ctx = TreeContext {
            query_id: "q",
            original_query: "x",
            original_embedding: &qe,
            ledger: &ledger,
        };
        let b = TreeBuilder {
            store: &st,
            embedder: &emb,
            pruner: &KeepAll,
            decomposer: &roles,
            k: 32,
            parallel: false,
        };
        assert!(b.expand(&ctx, "x", None, 0).is_err());
        assert!(b.expand(&ctx, "x", None, 4).is_err());
    }

    #[test]
    fn evidence_collection() {
        let t = build(1, &KeepAll, false);
        let ev = collect_evidence(&t);
        assert_eq!(ev.len(), 3 * 5);
        // Every node retrieved the whole 5-passage store, so kb0 appears thrice.
        assert_eq!(ev.iter().filter(|e| e.id() == "kb0").count(), 3);

        let mut all_pruned = t.clone();
        all_pruned.nodes.values_mut().for_each(|n| n.pruned = true);
        assert!(collect_evidence(&all_pruned).is_empty());
    }

    #[test]
    fn failed_decomposition_prunes_node() {
        let emb = StubEmbedder::new(16, 1);
        let st = store(&emb);
        let roles = Roles::new(Arc::new(StubBackend::new(StubBehavior {
            garbage_roles: [crate::backends::BackendRole::Decomposer].into(),
            ..Default::default()
        })));
        let ledger = CallLedger::new();
        let qe = embed("a and b", &emb).unwrap();
        let ctx = TreeContext {
            query_id: "q",
            original_query: "a and b",
            original_embedding: &qe,
            ledger: &ledger,
        };
        let b = TreeBuilder {
            store: &st,
            embedder: &emb,
            pruner: &KeepAll,
            decomposer: &roles,
            k: 32,
            parallel: false,
        };
        let t = b.expand(&ctx, "a and b", None, 2).unwrap();
        assert_eq!(t.node_count(), 1);
        assert!(t.root().pruned);
        assert_eq!(t.decompose_failures, 1);
        // One call plus one retry.
        assert_eq!(ledger.calls(crate::backends::BackendRole::Decomposer), 2);
    }
}
