use crate::InferenceError;

/// Default largest number of parents of a naive counting CPT.
pub const DEFAULT_NAIVE_CAP: usize = 16;

/// Deterministic counting CPT for `#(A.ρ = v)` over `k` filler parents, each
/// with `parent_card` values; the child ranges over `0..=bound`. With
/// `gated`, an extra first parent `#A` over `0..=bound` restricts the count
/// to the first `#A` fillers.
pub fn counting_cpt(
    k: usize,
    parent_card: usize,
    v: usize,
    bound: usize,
    gated: bool,
    cap: usize,
) -> Result<Vec<f64>, InferenceError> {
    if k > cap {
        return Err(InferenceError::NaiveCapExceeded { n: k, cap });
    }
    assert!(v < parent_card && k <= bound, "counting CPT out of shape");
    let out = bound + 1;
    let filler_rows = parent_card.pow(k as u32);
    let gates = if gated { bound + 1 } else { 1 };
    let mut cpt = vec![0.0; gates * filler_rows * out];
    let mut vals = vec![0usize; k];
    for g in 0..gates {
        let limit = if gated { g.min(k) } else { k };
        vals.iter_mut().for_each(|x| *x = 0);
        for r in 0..filler_rows {
            let count = vals[..limit].iter().filter(|x| **x == v).count();
            cpt[((g * filler_rows) + r) * out + count] = 1.0;
            for d in (0..k).rev() {
                vals[d] += 1;
                if vals[d] < parent_card {
                    break;
                }
                vals[d] = 0;
            }
        }
    }
    Ok(cpt)
}

/// `quantifier_cpt_naive` without number uncertainty: `n` parents, child
/// range `0..=n`.
pub fn quantifier_cpt_naive(n: usize, parent_card: usize, v: usize, cap: usize) -> Result<Vec<f64>, InferenceError> {
    counting_cpt(n, parent_card, v, n, false, cap)
}

/// CPT copying the parent picked by a selector. Parent order: the selector
/// (with `parent_cards.len()` values), then one parent per choice.
pub fn multiplexer_cpt(parent_cards: &[usize], out_card: usize) -> Result<Vec<f64>, InferenceError> {
    if let Some((i, c)) = parent_cards.iter().enumerate().find(|(_, c)| **c != out_card) {
        return Err(InferenceError::RangeMismatch(format!(
            "choice {i} has {c} values, output has {out_card}"
        )));
    }
    let route: Vec<usize> = (0..parent_cards.len()).collect();
    Ok(routed_multiplexer_cpt(&route, parent_cards.len(), out_card))
}

/// Multiplexer whose selector value `s` copies parent `route[s]`; several
/// selector values may share a parent.
pub(crate) fn routed_multiplexer_cpt(route: &[usize], parents: usize, out_card: usize) -> Vec<f64> {
    let combos = out_card.pow(parents as u32);
    let mut cpt = vec![0.0; route.len() * combos * out_card];
    let mut vals = vec![0usize; parents];
    for (s, &src) in route.iter().enumerate() {
        vals.iter_mut().for_each(|x| *x = 0);
        for r in 0..combos {
            cpt[(s * combos + r) * out_card + vals[src]] = 1.0;
            for d in (0..parents).rev() {
                vals[d] += 1;
                if vals[d] < out_card {
                    break;
                }
                vals[d] = 0;
            }
        }
    }
    cpt
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(cpt: &[f64], r: usize, out: usize) -> &[f64] {
        &cpt[r * out..(r + 1) * out]
    }

    #[test]
    fn counts_matching_parents() {
        // binary parents, v = 1
        let cpt = quantifier_cpt_naive(3, 2, 1, 16).unwrap();
        // parents (1, 0, 1) -> row 0b101 = 5
        assert_eq!(row(&cpt, 5, 4), &[0.0, 0.0, 1.0, 0.0]);
        let two = quantifier_cpt_naive(2, 2, 1, 16).unwrap();
        assert_eq!(row(&two, 3, 3), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn gate_counts_prefix() {
        let cpt = counting_cpt(2, 2, 1, 2, true, 16).unwrap();
        // #A = 0 with both parents matching
        assert_eq!(row(&cpt, 3, 3), &[1.0, 0.0, 0.0]);
        // #A = 1: only the first filler counts
        assert_eq!(row(&cpt, 4 + 3, 3), &[0.0, 1.0, 0.0]);
        assert_eq!(row(&cpt, 4 + 1, 3), &[1.0, 0.0, 0.0]);
        assert_eq!(row(&cpt, 8 + 3, 3), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn cap_is_enforced() {
        assert!(matches!(
            quantifier_cpt_naive(17, 2, 0, 16),
            Err(InferenceError::NaiveCapExceeded { n: 17, cap: 16 })
        ));
    }

    #[test]
    fn multiplexer_copies_selected_parent() {
        let cpt = multiplexer_cpt(&[2, 2], 2).unwrap();
        // selector 1, parents (0, 1) -> copies 1
        assert_eq!(row(&cpt, 4 + 1, 2), &[0.0, 1.0]);
        // selector 0, parents (1, 0) -> copies 1
        assert_eq!(row(&cpt, 2, 2), &[0.0, 1.0]);
        assert!(multiplexer_cpt(&[2, 3], 2).is_err());
    }
}
