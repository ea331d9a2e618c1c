use std::collections::BTreeMap;
use std::time::Instant;

use serde::Serialize;

use super::factor::union_scope;
use super::order::min_fill;
use super::{BnError, DiscreteNetwork, Factor};

/// Normalizing constants below this are reported as impossible evidence.
pub const IMPOSSIBLE_EVIDENCE: f64 = 1e-300;

/// Default cap on the cells of any intermediate factor.
pub const DEFAULT_MAX_CELLS: usize = 1 << 24;

#[derive(Clone, Copy, Debug)]
pub struct VeOptions {
    pub max_cells: usize,
    pub deadline: Option<Instant>,
}

impl Default for VeOptions {
    fn default() -> Self {
        Self {
            max_cells: DEFAULT_MAX_CELLS,
            deadline: None,
        }
    }
}

/// Work done by one elimination run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct VeStats {
    /// Largest factor scope formed (eliminated variable included).
    pub max_clique: usize,
    /// Total cells of all intermediate factors.
    pub cells: u128,
    pub nodes: usize,
}

impl VeStats {
    pub fn merge(&mut self, other: VeStats) {
        self.max_clique = self.max_clique.max(other.max_clique);
        self.cells = self.cells.saturating_add(other.cells);
        self.nodes = self.nodes.max(other.nodes);
    }
}

/// Unnormalized joint over `keep` (in that order) with evidence reduced out.
/// Nodes without a CPD must be evidenced or listed in `free`.
fn eliminate(
    net: &DiscreteNetwork,
    keep: &[usize],
    evidence: &BTreeMap<usize, usize>,
    free: &[usize],
    opts: &VeOptions,
) -> Result<(Factor, VeStats), BnError> {
    let relevant = net.ancestors(keep.iter().copied().chain(evidence.keys().copied()));
    let vars: Vec<usize> = relevant.iter().copied().filter(|v| !evidence.contains_key(v)).collect();
    let local = |v: usize| vars.binary_search(&v).expect("relevant variable");
    let mut factors: Vec<Option<Factor>> = Vec::new();
    for &id in &relevant {
        match net.cpt_factor(id) {
            Some(mut f) => {
                for (&e, &val) in evidence {
                    if f.contains(e) {
                        f = f.reduce(e, val);
                    }
                }
                factors.push(Some(f));
            }
            None if evidence.contains_key(&id) || free.contains(&id) => {}
            None => return Err(BnError::UnboundInput(net.node(id).name.clone())),
        }
    }
    let cards: Vec<usize> = vars.iter().map(|v| net.card(*v)).collect();
    let scopes: Vec<Vec<usize>> = factors
        .iter()
        .flatten()
        .map(|f| f.scope().iter().map(|v| local(*v)).collect())
        .collect();
    let mut elim = vec![true; vars.len()];
    for k in keep {
        if let Ok(i) = vars.binary_search(k) {
            elim[i] = false;
        }
    }
    let plan = min_fill(&cards, &scopes, &elim);
    let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); vars.len()];
    for (i, f) in factors.iter().enumerate() {
        for v in f.as_ref().expect("all present").scope() {
            buckets[local(*v)].push(i);
        }
    }
    let mut stats = VeStats {
        nodes: relevant.len(),
        ..VeStats::default()
    };
    for &lv in &plan.order {
        if opts.deadline.is_some_and(|d| Instant::now() > d) {
            return Err(BnError::Deadline);
        }
        let ids: Vec<usize> = buckets[lv].iter().copied().filter(|i| factors[*i].is_some()).collect();
        if ids.is_empty() {
            continue;
        }
        let taken: Vec<Factor> = ids.iter().map(|i| factors[*i].take().expect("live")).collect();
        let refs: Vec<&Factor> = taken.iter().collect();
        let var = vars[lv];
        let (scope, out_cards) = union_scope(&refs, Some(var));
        let cells = out_cards.iter().product::<usize>().saturating_mul(net.card(var));
        if cells > opts.max_cells {
            return Err(BnError::FactorTooLarge {
                cells,
                cap: opts.max_cells,
            });
        }
        stats.max_clique = stats.max_clique.max(scope.len() + 1);
        stats.cells = stats.cells.saturating_add(cells as u128);
        let f = Factor::combine(&refs, &scope, &out_cards, Some((var, net.card(var))));
        let idx = factors.len();
        for v in f.scope() {
            buckets[local(*v)].push(idx);
        }
        factors.push(Some(f));
    }
    let rest: Vec<Factor> = factors.into_iter().flatten().collect();
    let refs: Vec<&Factor> = rest.iter().collect();
    let keep_cards: Vec<usize> = keep.iter().map(|v| net.card(*v)).collect();
    let cells: usize = keep_cards.iter().product();
    if cells > opts.max_cells {
        return Err(BnError::FactorTooLarge {
            cells,
            cap: opts.max_cells,
        });
    }
    stats.max_clique = stats.max_clique.max(keep.len());
    stats.cells = stats.cells.saturating_add(cells as u128);
    Ok((Factor::combine(&refs, keep, &keep_cards, None), stats))
}

fn check_targets(net: &DiscreteNetwork, targets: &[usize]) -> Result<(), BnError> {
    if targets.is_empty() {
        return Err(BnError::EmptyTargets);
    }
    for (i, t) in targets.iter().enumerate() {
        if *t >= net.len() {
            return Err(BnError::UnknownNode(format!("#{t}")));
        }
        if targets[..i].contains(t) {
            return Err(BnError::ShapeMismatch(format!(
                "target `{}` listed twice",
                net.node(*t).name
            )));
        }
    }
    Ok(())
}

fn merged_evidence(net: &DiscreteNetwork, extra: &BTreeMap<usize, usize>) -> Result<BTreeMap<usize, usize>, BnError> {
    let mut ev = net.evidence().clone();
    for (&k, &v) in extra {
        if k >= net.len() {
            return Err(BnError::UnknownNode(format!("#{k}")));
        }
        if v >= net.card(k) {
            return Err(BnError::BadValue {
                node: net.node(k).name.clone(),
                value: v,
            });
        }
        ev.insert(k, v);
    }
    Ok(ev)
}

// negated so that a NaN mass is rejected as well
#[allow(clippy::neg_cmp_op_on_partial_ord)]
fn check_mass(log2z: f64) -> Result<(), BnError> {
    if !(log2z >= IMPOSSIBLE_EVIDENCE.log2()) {
        return Err(BnError::ImpossibleEvidence);
    }
    Ok(())
}

/// Normalized posterior joint over `targets` (in the given order) given the
/// network's evidence plus `evidence`.
pub fn query(net: &DiscreteNetwork, targets: &[usize], evidence: &BTreeMap<usize, usize>) -> Result<Factor, BnError> {
    query_with(net, targets, evidence, &VeOptions::default()).map(|(f, _)| f)
}

pub fn query_with(
    net: &DiscreteNetwork,
    targets: &[usize],
    evidence: &BTreeMap<usize, usize>,
    opts: &VeOptions,
) -> Result<(Factor, VeStats), BnError> {
    check_targets(net, targets)?;
    let ev = merged_evidence(net, evidence)?;
    let free: Vec<usize> = targets.iter().copied().filter(|t| !ev.contains_key(t)).collect();
    let (joint, stats) = eliminate(net, &free, &ev, &[], opts)?;
    let (joint, log2z) = joint.normalized();
    check_mass(log2z)?;
    if free.len() == targets.len() {
        return Ok((joint, stats));
    }
    // observed targets become point masses
    let mut parts = vec![joint];
    for t in targets.iter().filter(|t| ev.contains_key(t)) {
        let mut table = vec![0.0; net.card(*t)];
        table[ev[t]] = 1.0;
        parts.push(Factor::new(vec![*t], vec![net.card(*t)], table)?);
    }
    let refs: Vec<&Factor> = parts.iter().collect();
    let cards: Vec<usize> = targets.iter().map(|t| net.card(*t)).collect();
    let out = Factor::combine(&refs, targets, &cards, None).normalized().0;
    Ok((out, stats))
}

/// `P(outputs | input)` for a free input node: one normalized row per input
/// value, each over the joint of `outputs` in the given order.
pub fn conditional_query(
    net: &DiscreteNetwork,
    outputs: &[usize],
    input: usize,
    opts: &VeOptions,
) -> Result<(Vec<Vec<f64>>, VeStats), BnError> {
    check_targets(net, outputs)?;
    if input >= net.len() {
        return Err(BnError::UnknownNode(format!("#{input}")));
    }
    let node = net.node(input);
    if node.cpt.is_some() || !node.parents.is_empty() {
        return Err(BnError::InputHasCpd(node.name.clone()));
    }
    if outputs.contains(&input) {
        return Err(BnError::ShapeMismatch("input listed as an output".into()));
    }
    let ev = net.evidence().clone();
    if ev.contains_key(&input) {
        return Err(BnError::ShapeMismatch("input node is clamped".into()));
    }
    let mut keep = vec![input];
    keep.extend(outputs.iter().copied().filter(|o| !ev.contains_key(o)));
    let (joint, stats) = eliminate(net, &keep, &ev, &[input], opts)?;
    let row_len: usize = keep[1..].iter().map(|v| net.card(*v)).product();
    let mut rows = Vec::with_capacity(net.card(input));
    for chunk in joint.table().chunks(row_len) {
        let z: f64 = chunk.iter().sum();
        check_mass(z.log2() + joint.exp() as f64)?;
        let row: Vec<f64> = chunk.iter().map(|v| v / z).collect();
        rows.push(row);
    }
    if keep.len() - 1 != outputs.len() {
        rows = rows
            .into_iter()
            .map(|r| expand_observed(net, outputs, &ev, &r))
            .collect();
    }
    Ok((rows, stats))
}

/// Re-insert observed outputs as point-mass coordinates.
fn expand_observed(net: &DiscreteNetwork, outputs: &[usize], ev: &BTreeMap<usize, usize>, row: &[f64]) -> Vec<f64> {
    let cards: Vec<usize> = outputs.iter().map(|o| net.card(*o)).collect();
    let size: usize = cards.iter().product();
    let mut out = vec![0.0; size];
    let mut src = 0;
    for (idx, cell) in out.iter_mut().enumerate() {
        let mut rem = idx;
        let mut ok = true;
        for d in (0..outputs.len()).rev() {
            let a = rem % cards[d];
            rem /= cards[d];
            if let Some(&v) = ev.get(&outputs[d]) {
                ok &= a == v;
            }
        }
        if ok {
            *cell = row[src];
            src += 1;
        }
    }
    out
}

/// [`query_with`] that tolerates the same node listed several times in
/// `targets`; returns the normalized joint row-major over `targets`.
pub fn query_repeated(
    net: &DiscreteNetwork,
    targets: &[usize],
    evidence: &BTreeMap<usize, usize>,
    opts: &VeOptions,
) -> Result<(Vec<f64>, VeStats), BnError> {
    let (unique, pos) = dedup(targets);
    let (joint, stats) = query_with(net, &unique, evidence, opts)?;
    if unique.len() == targets.len() {
        return Ok((joint.values(), stats));
    }
    let cards: Vec<usize> = unique.iter().map(|u| net.card(*u)).collect();
    Ok((expand_repeats(&cards, &pos, &joint.values()), stats))
}

/// Distinct ids in first-seen order, plus each input's position among them.
pub(crate) fn dedup(ids: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let mut unique: Vec<usize> = Vec::new();
    let pos = ids
        .iter()
        .map(|t| {
            unique.iter().position(|u| u == t).unwrap_or_else(|| {
                unique.push(*t);
                unique.len() - 1
            })
        })
        .collect();
    (unique, pos)
}

/// Lift a table over distinct variables with `cards` to one over the
/// repeated list `pos`; inconsistent repeats get probability zero.
pub(crate) fn expand_repeats(cards: &[usize], pos: &[usize], row: &[f64]) -> Vec<f64> {
    let out_cards: Vec<usize> = pos.iter().map(|p| cards[*p]).collect();
    let size: usize = out_cards.iter().product();
    let mut out = vec![0.0; size];
    let mut digits = vec![0usize; pos.len()];
    let mut vals = vec![usize::MAX; cards.len()];
    for cell in out.iter_mut() {
        vals.iter_mut().for_each(|v| *v = usize::MAX);
        let mut ok = true;
        for (d, p) in digits.iter().zip(pos) {
            if vals[*p] == usize::MAX {
                vals[*p] = *d;
            } else {
                ok &= vals[*p] == *d;
            }
        }
        if ok {
            let src = vals.iter().zip(cards).fold(0, |acc, (v, c)| acc * c + v);
            *cell = row[src];
        }
        for d in (0..digits.len()).rev() {
            digits[d] += 1;
            if digits[d] < out_cards[d] {
                break;
            }
            digits[d] = 0;
        }
    }
    out
}
