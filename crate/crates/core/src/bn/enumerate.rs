use std::collections::BTreeMap;

use super::{BnError, DiscreteNetwork, Factor};

/// Default cap on the number of joint states enumerated.
pub const DEFAULT_STATE_CAP: u128 = 1 << 20;

/// Brute-force joint over every non-evidence node (ascending ids), given the
/// network's evidence plus `evidence`. Unnormalized: cells are
/// `P(x, evidence)`. Free input nodes must be evidenced.
pub fn joint_enumerate(net: &DiscreteNetwork, evidence: &BTreeMap<usize, usize>, cap: u128) -> Result<Factor, BnError> {
    let mut ev = net.evidence().clone();
    ev.extend(evidence.iter().map(|(k, v)| (*k, *v)));
    let free: Vec<usize> = (0..net.len()).filter(|v| !ev.contains_key(v)).collect();
    let states = free
        .iter()
        .fold(1u128, |acc, v| acc.saturating_mul(net.card(*v) as u128));
    if states > cap {
        return Err(BnError::StateSpaceTooLarge { states, cap });
    }
    for (id, n) in net.nodes().iter().enumerate() {
        if n.cpt.is_none() && !ev.contains_key(&id) {
            return Err(BnError::UnboundInput(n.name.clone()));
        }
    }
    let cards: Vec<usize> = free.iter().map(|v| net.card(*v)).collect();
    let mut assign = vec![0usize; net.len()];
    for (k, v) in &ev {
        assign[*k] = *v;
    }
    let mut table = Vec::with_capacity(states as usize);
    let mut local = vec![0usize; free.len()];
    for _ in 0..states {
        for (i, v) in free.iter().enumerate() {
            assign[*v] = local[i];
        }
        let mut p = 1.0;
        for (id, n) in net.nodes().iter().enumerate() {
            let Some(cpt) = &n.cpt else { continue };
            let mut row = 0;
            for par in &n.parents {
                row = row * net.card(*par) + assign[*par];
            }
            p *= cpt[row * n.card() + assign[id]];
            if p == 0.0 {
                break;
            }
        }
        table.push(p);
        for d in (0..free.len()).rev() {
            local[d] += 1;
            if local[d] < cards[d] {
                break;
            }
            local[d] = 0;
        }
    }
    Factor::new(free, cards, table)
}

/// Normalized marginal joint over `targets` from the enumeration oracle.
pub fn enumerate_marginal(
    net: &DiscreteNetwork,
    targets: &[usize],
    evidence: &BTreeMap<usize, usize>,
    cap: u128,
) -> Result<Vec<f64>, BnError> {
    let mut ev = net.evidence().clone();
    ev.extend(evidence.iter().map(|(k, v)| (*k, *v)));
    let joint = joint_enumerate(net, &ev, cap)?;
    let values = joint.values();
    let cards: Vec<usize> = targets.iter().map(|t| net.card(*t)).collect();
    let mut out = vec![0.0; cards.iter().product()];
    let scope = joint.scope();
    let jcards = joint.cards();
    for (idx, p) in values.iter().enumerate() {
        let mut rem = idx;
        let mut a = vec![0usize; scope.len()];
        for d in (0..scope.len()).rev() {
            a[d] = rem % jcards[d];
            rem /= jcards[d];
        }
        let mut o = 0;
        for t in targets {
            let v = match ev.get(t) {
                Some(v) => *v,
                None => a[scope.iter().position(|x| x == t).expect("free target")],
            };
            o = o * net.card(*t) + v;
        }
        out[o] += p;
    }
    let z: f64 = out.iter().sum();
    if z <= 0.0 {
        return Err(BnError::ImpossibleEvidence);
    }
    Ok(out.into_iter().map(|p| p / z).collect())
}
