//! Object-structured recursive inference. Each class subquery builds a
//! small local network whose complex attributes are summarized by recursive
//! calls; named instances are flattened into one top-level network.

mod builder;
mod cache;
mod quantifier;

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::Serialize;

pub use cache::{CacheStats, InputRef, SolveCache, SubQuery, SubQueryResult};
pub use quantifier::{
    binomial_cpt, binomial_prefixes, operation_bound, quantifier_joint_cpt, quantifier_joint_with_number,
    QuantifierJoint,
};

use crate::bn::{
    conditional_query, dedup_ids, expand_repeats, query_repeated, triangulation_stats, DiscreteNetwork, VeOptions,
    VeStats,
};
use crate::kbmc::DEFAULT_NAIVE_CAP;
use crate::lang::{check_observation, resolve_target};
use crate::model::{KbIndex, KnowledgeBase, ModelError, ObjectRef};
use crate::query::{QueryExpr, QueryResult};
use crate::InferenceError;
use builder::{LocalBuilder, Owner, Scope};

/// Default cap on nested recursive calls.
pub const DEFAULT_DEPTH_CAP: usize = 64;

#[derive(Clone, Copy, Debug)]
pub struct StructuredOptions {
    /// Memoize class subqueries.
    pub reuse: bool,
    /// Expand multi-valued attributes into one slot per filler instead of
    /// the combinatoric count recurrence.
    pub naive_quantifiers: bool,
    pub naive_cap: usize,
    pub depth_cap: usize,
    pub ve: VeOptions,
}

impl Default for StructuredOptions {
    fn default() -> Self {
        Self {
            reuse: true,
            naive_quantifiers: false,
            naive_cap: DEFAULT_NAIVE_CAP,
            depth_cap: DEFAULT_DEPTH_CAP,
            ve: VeOptions::default(),
        }
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct StructuredStats {
    /// Nodes of the top-level network.
    pub top_level_nodes: usize,
    /// Largest clique of the top-level network or of any local network
    /// behind it, cached calls included.
    pub max_local_clique: usize,
    pub top_level_clique: usize,
    pub ve: VeStats,
    /// Cumulative cache counters of the engine after this query.
    pub cache: CacheStats,
}

/// Structured backend over one immutable KB. The cache persists across
/// queries and is shared by concurrent callers.
pub struct StructuredEngine {
    index: Arc<KbIndex>,
    opts: StructuredOptions,
    cache: SolveCache,
}

/// Top-level network for one query, with symbol ids mapped to node ids.
pub struct TopLevelNetwork {
    pub net: DiscreteNetwork,
    pub targets: Vec<usize>,
    pub evidence: BTreeMap<usize, usize>,
    /// Largest clique over the recursive calls behind the network.
    pub sub_max_clique: usize,
}

impl StructuredEngine {
    pub fn new(index: Arc<KbIndex>, opts: StructuredOptions) -> Self {
        Self {
            index,
            opts,
            cache: SolveCache::default(),
        }
    }

    pub fn index(&self) -> &Arc<KbIndex> {
        &self.index
    }

    pub fn options(&self) -> &StructuredOptions {
        &self.opts
    }

    pub fn cache_stats(&self) -> CacheStats {
        self.cache.stats()
    }

    pub fn cache(&self) -> &SolveCache {
        &self.cache
    }

    /// `SolveQuery` on a class: `P(outputs | inputs)`.
    pub fn solve_query(&self, q: &SubQuery) -> Result<Arc<SubQueryResult>, InferenceError> {
        let class = ObjectRef::Class(q.class.clone());
        for o in &q.outputs {
            let r = self.index.resolve(&class, o)?;
            if !r.single_valued {
                return Err(ModelError::NonSimpleChain {
                    chain: o.to_string(),
                    reason: "crosses a multi-valued attribute".into(),
                }
                .into());
            }
        }
        self.solve_at(q, 1)
    }

    pub(crate) fn solve_at(&self, q: &SubQuery, depth: usize) -> Result<Arc<SubQueryResult>, InferenceError> {
        if depth > self.opts.depth_cap {
            return Err(InferenceError::RecursionDepthExceeded {
                depth,
                at: q.to_string(),
            });
        }
        if q.outputs.is_empty() {
            return Err(InferenceError::Unsupported(format!("subquery {q} has no outputs")));
        }
        if self.opts.reuse {
            if let Some(hit) = self.cache.get(q) {
                return Ok(hit);
            }
        }
        self.cache.record_miss(q);
        let result = Arc::new(self.compute(q, depth)?);
        if self.opts.reuse {
            self.cache.insert(q.clone(), result.clone());
        }
        Ok(result)
    }

    fn compute(&self, q: &SubQuery, depth: usize) -> Result<SubQueryResult, InferenceError> {
        let mut b = LocalBuilder::new(
            self,
            depth,
            Scope::Class {
                class: q.class.clone(),
                entry: q.entry.clone(),
            },
        );
        let mut outs = Vec::with_capacity(q.outputs.len());
        for o in &q.outputs {
            outs.push(b.chain_sym(&Owner::This, o)?);
        }
        b.settle()?;
        let sub_max = b.sub_max_clique;
        let local = b.finish(&outs, &BTreeMap::new())?;
        let (unique, pos) = dedup_ids(&local.outputs);
        let cards: Vec<usize> = unique.iter().map(|u| local.net.card(*u)).collect();
        let mut rows = match local.input {
            Some(input) => conditional_query(&local.net, &unique, input, &self.opts.ve)?.0,
            None => vec![query_repeated(&local.net, &unique, &BTreeMap::new(), &self.opts.ve)?.0],
        };
        if unique.len() != local.outputs.len() {
            rows = rows.iter().map(|r| expand_repeats(&cards, &pos, r)).collect();
        }
        let local_max_clique = triangulation_stats(&local.net).max_clique;
        Ok(SubQueryResult {
            inputs: local.inputs,
            input_ranges: local.input_ranges,
            output_ranges: local.outputs.iter().map(|o| local.net.node(*o).range.clone()).collect(),
            rows,
            local_max_clique,
            max_clique: local_max_clique.max(sub_max),
        })
    }

    /// Build the top-level network for `q` without running inference.
    pub fn top_level_network(&self, q: &QueryExpr) -> Result<TopLevelNetwork, InferenceError> {
        let mut b = LocalBuilder::new(self, 0, Scope::TopLevel);
        let mut targets = Vec::with_capacity(q.targets.len());
        for t in &q.targets {
            resolve_target(&self.index, t)?;
            targets.push(b.chain_sym(&Owner::Named(t.instance.clone()), &t.chain)?);
        }
        let mut evidence: BTreeMap<usize, usize> = BTreeMap::new();
        for (inst, attr, v) in self.index.asserted_evidence() {
            let id = b.value_sym(&Owner::Named(inst.clone()), attr)?;
            evidence.insert(id, *v);
        }
        for e in &q.evidence {
            let v = check_observation(&self.index, e)?;
            let id = b.chain_sym(&Owner::Named(e.target.instance.clone()), &e.target.chain)?;
            if evidence.insert(id, v).is_some_and(|old| old != v) {
                return Err(InferenceError::ContradictoryEvidence(e.target.to_string()));
            }
        }
        b.settle()?;
        let sub_max_clique = b.sub_max_clique;
        let local = b.finish(&targets, &evidence)?;
        Ok(TopLevelNetwork {
            net: local.net,
            targets: local.outputs,
            evidence: local.evidence,
            sub_max_clique,
        })
    }

    /// `SolveTopLevel`: posterior joint over the query targets.
    pub fn query(&self, q: &QueryExpr) -> Result<(QueryResult, StructuredStats), InferenceError> {
        let top = self.top_level_network(q)?;
        let (joint, ve) = query_repeated(&top.net, &top.targets, &top.evidence, &self.opts.ve)?;
        let top_level_clique = triangulation_stats(&top.net).max_clique;
        let result = QueryResult {
            targets: q.targets.clone(),
            ranges: top.targets.iter().map(|t| top.net.node(*t).range.clone()).collect(),
            joint,
        };
        let stats = StructuredStats {
            top_level_nodes: top.net.len(),
            max_local_clique: top_level_clique.max(top.sub_max_clique),
            top_level_clique,
            ve,
            cache: self.cache.stats(),
        };
        Ok((result, stats))
    }
}

/// One-shot structured answer for `q` on `kb`.
pub fn solve_top_level(kb: &KnowledgeBase, q: &QueryExpr) -> Result<QueryResult, InferenceError> {
    let index = Arc::new(KbIndex::new(kb.clone())?);
    StructuredEngine::new(index, StructuredOptions::default())
        .query(q)
        .map(|(r, _)| r)
}
