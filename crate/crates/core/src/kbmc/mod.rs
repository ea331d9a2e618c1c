//! Knowledge-based model construction: ground the KB into one flat network
//! and answer queries on it with variable elimination.

mod cpt;
mod ground;

use std::collections::BTreeMap;
use std::sync::Arc;

use parking_lot::Mutex;
use serde::Serialize;

pub(crate) use cpt::routed_multiplexer_cpt;
pub use cpt::{counting_cpt, multiplexer_cpt, quantifier_cpt_naive, DEFAULT_NAIVE_CAP};
pub use ground::{ground, GroundMap, GroundOptions, Grounding};

use crate::bn::{query_repeated, triangulation_stats, CliqueStats, VeOptions, VeStats};
use crate::lang::{check_observation, resolve_target};
use crate::model::{KbIndex, KnowledgeBase};
use crate::query::{QueryExpr, QueryResult};
use crate::InferenceError;

#[derive(Clone, Copy, Debug, Default)]
pub struct KbmcOptions {
    pub ground: GroundOptions,
    pub ve: VeOptions,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct KbmcStats {
    /// Nodes in the grounded network answering this query.
    pub nodes: usize,
    pub ve: VeStats,
}

/// Extended grounding, target node ids, and evidence as node id to value index.
pub type Prepared = (Grounding, Vec<usize>, BTreeMap<usize, usize>);

/// Flat-grounding backend. The base grounding is built once per KB and
/// extended per query with any chain nodes it needs.
pub struct KbmcEngine {
    index: Arc<KbIndex>,
    opts: KbmcOptions,
    base: Mutex<Option<Arc<Grounding>>>,
}

impl KbmcEngine {
    pub fn new(index: Arc<KbIndex>, opts: KbmcOptions) -> Self {
        Self {
            index,
            opts,
            base: Mutex::new(None),
        }
    }

    pub fn index(&self) -> &Arc<KbIndex> {
        &self.index
    }

    pub fn grounding(&self) -> Result<Arc<Grounding>, InferenceError> {
        let mut base = self.base.lock();
        if let Some(g) = base.as_ref() {
            return Ok(g.clone());
        }
        let g = Arc::new(Grounding::new(self.index.clone(), self.opts.ground)?);
        *base = Some(g.clone());
        Ok(g)
    }

    /// Min-fill triangulation of the whole grounded network.
    pub fn flat_stats(&self) -> Result<CliqueStats, InferenceError> {
        Ok(triangulation_stats(self.grounding()?.network()))
    }

    /// Grounding extended with the query's chains, plus node ids of its
    /// targets and evidence.
    pub fn prepare(&self, q: &QueryExpr) -> Result<Prepared, InferenceError> {
        let mut g = (*self.grounding()?).clone();
        let mut targets = Vec::with_capacity(q.targets.len());
        for t in &q.targets {
            resolve_target(&self.index, t)?;
            targets.push(g.chain(t)?);
        }
        let mut evidence = BTreeMap::new();
        for e in &q.evidence {
            let v = check_observation(&self.index, e)?;
            let id = g.chain(&e.target)?;
            let prior = g.network().evidence().get(&id).copied();
            match evidence.insert(id, v).or(prior) {
                Some(old) if old != v => return Err(InferenceError::ContradictoryEvidence(e.target.to_string())),
                _ => {}
            }
        }
        Ok((g, targets, evidence))
    }

    pub fn query(&self, q: &QueryExpr) -> Result<(QueryResult, KbmcStats), InferenceError> {
        let (g, targets, evidence) = self.prepare(q)?;
        let (joint, ve) = query_repeated(g.network(), &targets, &evidence, &self.opts.ve)?;
        let ranges = targets.iter().map(|t| g.network().node(*t).range.clone()).collect();
        let result = QueryResult {
            targets: q.targets.clone(),
            ranges,
            joint,
        };
        Ok((
            result,
            KbmcStats {
                nodes: g.network().len(),
                ve,
            },
        ))
    }
}

/// One-shot KBMC answer for `q` on `kb`.
pub fn answer_query_kbmc(kb: &KnowledgeBase, q: &QueryExpr) -> Result<QueryResult, InferenceError> {
    let index = Arc::new(KbIndex::new(kb.clone())?);
    KbmcEngine::new(index, KbmcOptions::default()).query(q).map(|(r, _)| r)
}
