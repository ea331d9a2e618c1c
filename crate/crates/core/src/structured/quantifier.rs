//! Combinatoric quantifier distributions: counting how many of `n` i.i.d.
//! fillers match, without materializing the fillers.

/// `P(Q = k)` for `k = 0..=n` when each of `n` fillers matches with
/// probability `p`, by the recurrence
/// `P_{m+1}(k) = (1-p) P_m(k) + p P_m(k-1)`, `P_0(0) = 1`.
pub fn binomial_cpt(p: f64, n: usize) -> Vec<f64> {
    binomial_prefixes(p, n).pop().expect("n + 1 prefixes")
}

/// `P_m` for every `m = 0..=n`, each padded to length `n + 1`.
pub fn binomial_prefixes(p: f64, n: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(n + 1);
    let mut cur = vec![0.0; n + 1];
    cur[0] = 1.0;
    out.push(cur.clone());
    for m in 0..n {
        let mut next = vec![0.0; n + 1];
        for k in 0..=m + 1 {
            let stay = if k <= m { (1.0 - p) * cur[k] } else { 0.0 };
            let step = if k > 0 { p * cur[k - 1] } else { 0.0 };
            next[k] = stay + step;
        }
        cur = next;
        out.push(cur.clone());
    }
    out
}

/// Joint quantifier distributions from the vector recurrence.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantifierJoint {
    pub ell: usize,
    pub n: usize,
    /// `prefixes[m]` is `P_m` over `{0..=n}^ell`, row-major with the first
    /// quantifier most significant.
    pub prefixes: Vec<Vec<f64>>,
    /// Multiply-add operations performed.
    pub ops: u64,
}

impl QuantifierJoint {
    /// `P_n`, the joint with all `n` fillers present.
    pub fn full(&self) -> &[f64] {
        &self.prefixes[self.n]
    }
}

/// Vector recurrence `P_{m+1}(k) = Σ_{c + k' = k} p_c P_m(k')` over
/// contribution vectors `c ∈ {0,1}^ell`. `contrib` is indexed by `c` with
/// the first quantifier as the most significant bit.
pub fn quantifier_joint_cpt(contrib: &[f64], ell: usize, n: usize) -> QuantifierJoint {
    assert!(
        ell >= 1 && contrib.len() == 1 << ell,
        "contribution vector of length 2^ell"
    );
    let side = n + 1;
    let size = side.pow(ell as u32);
    // stride of coordinate j in the joint table and the offset of each c
    let strides: Vec<usize> = (0..ell).map(|j| side.pow((ell - 1 - j) as u32)).collect();
    let offsets: Vec<usize> = (0..contrib.len())
        .map(|c| {
            (0..ell)
                .filter(|j| c >> (ell - 1 - j) & 1 == 1)
                .map(|j| strides[j])
                .sum()
        })
        .collect();
    let mut cur = vec![0.0; size];
    cur[0] = 1.0;
    let mut prefixes = Vec::with_capacity(side);
    prefixes.push(cur.clone());
    let mut ops = 0u64;
    let mut digits = vec![0usize; ell];
    for m in 0..n {
        let mut next = vec![0.0; size];
        digits.iter_mut().for_each(|d| *d = 0);
        for (k, cell) in next.iter_mut().enumerate() {
            // only k with every coordinate ≤ m + 1 can be reached
            if digits.iter().all(|d| *d <= m + 1) {
                let mut acc = 0.0;
                for (c, p) in contrib.iter().enumerate() {
                    let fits = (0..ell).all(|j| c >> (ell - 1 - j) & 1 == 0 || digits[j] >= 1);
                    if fits {
                        let prev = k - offsets[c];
                        acc += p * cur[prev];
                        ops += 1;
                    }
                }
                *cell = acc;
            }
            for d in (0..ell).rev() {
                digits[d] += 1;
                if digits[d] < side {
                    break;
                }
                digits[d] = 0;
            }
        }
        cur = next;
        prefixes.push(cur.clone());
    }
    QuantifierJoint { ell, n, prefixes, ops }
}

/// Joint over `{0..=n}^ell` when the number of fillers is itself uncertain
/// with distribution `number` over `0..=n`: `Σ_m P(#A = m) P_m`.
pub fn quantifier_joint_with_number(contrib: &[f64], ell: usize, number: &[f64]) -> (Vec<f64>, u64) {
    assert!(!number.is_empty(), "number distribution over 0..=n");
    let q = quantifier_joint_cpt(contrib, ell, number.len() - 1);
    let mut out = vec![0.0; q.full().len()];
    for (p, prefix) in number.iter().zip(&q.prefixes) {
        for (o, x) in out.iter_mut().zip(prefix) {
            *o += p * x;
        }
    }
    (out, q.ops)
}

/// Upper bound `(2(n+1))^(ell+1)` on the operations of
/// [`quantifier_joint_cpt`].
pub fn operation_bound(ell: usize, n: usize) -> u64 {
    (2 * (n as u64 + 1)).pow(ell as u32 + 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fair_coin() {
        let b = binomial_cpt(0.5, 2);
        assert_eq!(b, vec![0.25, 0.5, 0.25]);
    }

    #[test]
    fn zero_probability() {
        assert_eq!(binomial_cpt(0.0, 3), vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn single_quantifier_reduces_to_binomial() {
        let q = quantifier_joint_cpt(&[0.7, 0.3], 1, 4);
        let b = binomial_cpt(0.3, 4);
        for (x, y) in q.full().iter().zip(&b) {
            assert!((x - y).abs() < 1e-15);
        }
        assert!((b[2] - 0.2646).abs() < 1e-12);
    }

    #[test]
    fn one_draw_is_the_contribution() {
        let pc = [0.1, 0.2, 0.3, 0.4];
        let q = quantifier_joint_cpt(&pc, 2, 1);
        assert_eq!(q.full(), &pc);
    }

    #[test]
    fn ops_within_bound() {
        for ell in 1..=3 {
            for n in 0..=5 {
                let pc = vec![1.0 / (1 << ell) as f64; 1 << ell];
                let q = quantifier_joint_cpt(&pc, ell, n);
                assert!(q.ops <= operation_bound(ell, n));
            }
        }
    }
}
