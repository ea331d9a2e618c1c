use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::Mutex;
use serde::Serialize;

use crate::model::AttributeChain;

/// Variable a subquery result is conditioned on.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum InputRef {
    /// `E.chain` through the entry point, i.e. `chain` on the caller.
    Entry(AttributeChain),
    /// An attribute of a named instance reached through a reference choice;
    /// resolved at the top level so that sharing stays exact.
    Named { instance: String, chain: AttributeChain },
}

impl fmt::Display for InputRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InputRef::Entry(c) => write!(f, "{c}"),
            InputRef::Named { instance, chain } => write!(f, "{instance}::{chain}"),
        }
    }
}

/// Arguments of one recursive call on a class. Outputs are kept sorted and
/// deduplicated so equal calls have equal keys.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct SubQuery {
    pub class: String,
    pub outputs: Vec<AttributeChain>,
    pub entry: Option<String>,
}

impl SubQuery {
    pub fn new(
        class: impl Into<String>,
        outputs: impl IntoIterator<Item = AttributeChain>,
        entry: Option<String>,
    ) -> Self {
        let mut outputs: Vec<AttributeChain> = outputs.into_iter().collect();
        outputs.sort();
        outputs.dedup();
        Self {
            class: class.into(),
            outputs,
            entry,
        }
    }
}

impl fmt::Display for SubQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let outs: Vec<String> = self.outputs.iter().map(|o| o.to_string()).collect();
        write!(f, "{}({})", self.class, outs.join(", "))?;
        if let Some(e) = &self.entry {
            write!(f, " via {e}")?;
        }
        Ok(())
    }
}

/// `P(outputs | inputs)` for a subquery: one row per joint input value
/// (row-major over `inputs`), each over the joint of the outputs.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SubQueryResult {
    pub inputs: Vec<InputRef>,
    pub input_ranges: Vec<Vec<String>>,
    pub output_ranges: Vec<Vec<String>>,
    pub rows: Vec<Vec<f64>>,
    /// Largest clique of this call's own local network.
    pub local_max_clique: usize,
    /// Largest clique over this call and every call below it.
    pub max_clique: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct CacheStats {
    pub hits: u64,
    pub misses: u64,
    pub entries: u64,
}

/// Shared memo of class subqueries. Concurrent callers may compute the same
/// key twice; the results are identical and the last write wins.
#[derive(Debug, Default)]
pub struct SolveCache {
    map: Mutex<HashMap<SubQuery, Arc<SubQueryResult>>>,
    misses_by_class: Mutex<BTreeMap<String, u64>>,
    hits: AtomicU64,
    misses: AtomicU64,
}

impl SolveCache {
    pub fn get(&self, key: &SubQuery) -> Option<Arc<SubQueryResult>> {
        let found = self.map.lock().get(key).cloned();
        if found.is_some() {
            self.hits.fetch_add(1, Ordering::Relaxed);
        }
        found
    }

    pub fn record_miss(&self, key: &SubQuery) {
        self.misses.fetch_add(1, Ordering::Relaxed);
        *self.misses_by_class.lock().entry(key.class.clone()).or_default() += 1;
    }

    pub fn insert(&self, key: SubQuery, value: Arc<SubQueryResult>) {
        self.map.lock().insert(key, value);
    }

    pub fn stats(&self) -> CacheStats {
        CacheStats {
            hits: self.hits.load(Ordering::Relaxed),
            misses: self.misses.load(Ordering::Relaxed),
            entries: self.map.lock().len() as u64,
        }
    }

    /// Misses per target class since creation or the last [`clear`](Self::clear).
    pub fn misses_by_class(&self) -> BTreeMap<String, u64> {
        self.misses_by_class.lock().clone()
    }

    pub fn clear(&self) {
        self.map.lock().clear();
        self.misses_by_class.lock().clear();
        self.hits.store(0, Ordering::Relaxed);
        self.misses.store(0, Ordering::Relaxed);
    }
}
