use std::collections::{BTreeMap, HashMap};

use super::{BnError, Factor};
use crate::model::CPT_ROW_TOLERANCE;

#[derive(Clone, Debug, PartialEq)]
pub struct Node {
    pub name: String,
    pub range: Vec<String>,
    pub parents: Vec<usize>,
    /// Flat CPT, one row per parent configuration (first parent most
    /// significant). `None` marks a free input node.
    pub cpt: Option<Vec<f64>>,
}

impl Node {
    pub fn card(&self) -> usize {
        self.range.len()
    }
}

/// Discrete Bayesian network. Parents always have smaller ids than their
/// children, so node order is a topological order.
#[derive(Clone, Debug, Default)]
pub struct DiscreteNetwork {
    nodes: Vec<Node>,
    by_name: HashMap<String, usize>,
    evidence: BTreeMap<usize, usize>,
}

impl DiscreteNetwork {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> &Node {
        &self.nodes[id]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.by_name.get(name).copied()
    }

    pub fn card(&self, id: usize) -> usize {
        self.nodes[id].range.len()
    }

    pub fn evidence(&self) -> &BTreeMap<usize, usize> {
        &self.evidence
    }

    fn check_new(&self, name: &str, range: &[String], parents: &[usize]) -> Result<(), BnError> {
        if self.by_name.contains_key(name) {
            return Err(BnError::DuplicateNode(name.to_string()));
        }
        if range.is_empty() {
            return Err(BnError::ShapeMismatch(format!("node `{name}` has an empty range")));
        }
        let next = self.nodes.len();
        for (i, p) in parents.iter().enumerate() {
            if *p >= next {
                return Err(BnError::UnknownNode(format!("parent #{p} of `{name}`")));
            }
            if parents[..i].contains(p) {
                return Err(BnError::ShapeMismatch(format!("node `{name}` lists parent #{p} twice")));
            }
        }
        Ok(())
    }

    /// Add a node with a CPT; rows must be distributions within
    /// [`CPT_ROW_TOLERANCE`].
    pub fn add_node(
        &mut self,
        name: impl Into<String>,
        range: Vec<String>,
        parents: Vec<usize>,
        cpt: Vec<f64>,
    ) -> Result<usize, BnError> {
        let name = name.into();
        self.check_new(&name, &range, &parents)?;
        let rows: usize = parents.iter().map(|p| self.nodes[*p].card()).product();
        let k = range.len();
        if cpt.len() != rows * k {
            return Err(BnError::ShapeMismatch(format!(
                "CPT of `{name}` has {} entries, expected {rows}×{k}",
                cpt.len()
            )));
        }
        for (r, row) in cpt.chunks(k).enumerate() {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) || (sum - 1.0).abs() > CPT_ROW_TOLERANCE {
                return Err(BnError::NotStochastic(format!("row {r} of `{name}` sums to {sum}")));
            }
        }
        let id = self.nodes.len();
        self.by_name.insert(name.clone(), id);
        self.nodes.push(Node {
            name,
            range,
            parents,
            cpt: Some(cpt),
        });
        Ok(id)
    }

    /// Add a parentless node without a CPD, to be clamped or conditioned on.
    pub fn add_input(&mut self, name: impl Into<String>, range: Vec<String>) -> Result<usize, BnError> {
        let name = name.into();
        self.check_new(&name, &range, &[])?;
        let id = self.nodes.len();
        self.by_name.insert(name.clone(), id);
        self.nodes.push(Node {
            name,
            range,
            parents: Vec::new(),
            cpt: None,
        });
        Ok(id)
    }

    pub fn set_evidence(&mut self, id: usize, value: usize) -> Result<(), BnError> {
        let node = self
            .nodes
            .get(id)
            .ok_or_else(|| BnError::UnknownNode(format!("#{id}")))?;
        if value >= node.card() {
            return Err(BnError::BadValue {
                node: node.name.clone(),
                value,
            });
        }
        self.evidence.insert(id, value);
        Ok(())
    }

    pub fn clear_evidence(&mut self) {
        self.evidence.clear();
    }

    /// CPT of `id` as a factor over `parents ++ [id]`.
    pub fn cpt_factor(&self, id: usize) -> Option<Factor> {
        let n = &self.nodes[id];
        let cpt = n.cpt.as_ref()?;
        let mut scope = n.parents.clone();
        scope.push(id);
        let cards = scope.iter().map(|v| self.card(*v)).collect();
        Some(Factor::new(scope, cards, cpt.clone()).expect("shape checked on insertion"))
    }

    /// Ids of `seeds` and all their ancestors, ascending.
    pub fn ancestors(&self, seeds: impl IntoIterator<Item = usize>) -> Vec<usize> {
        let mut keep = vec![false; self.nodes.len()];
        let mut stack: Vec<usize> = seeds.into_iter().collect();
        while let Some(v) = stack.pop() {
            if !keep[v] {
                keep[v] = true;
                stack.extend(self.nodes[v].parents.iter().copied());
            }
        }
        (0..self.nodes.len()).filter(|v| keep[*v]).collect()
    }

    /// Product of all range sizes, saturating.
    pub fn state_space(&self) -> u128 {
        self.nodes
            .iter()
            .fold(1u128, |acc, n| acc.saturating_mul(n.card() as u128))
    }
}
