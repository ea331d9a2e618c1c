use super::BnError;
use crate::par;

/// Nonnegative table over an ordered scope of variables. The table is
/// row-major with the first scope variable most significant. Values are
/// stored as `table * 2^exp` so long elimination runs cannot underflow.
#[derive(Clone, Debug, PartialEq)]
pub struct Factor {
    scope: Vec<usize>,
    cards: Vec<usize>,
    table: Vec<f64>,
    exp: i64,
}

pub(crate) fn strides(cards: &[usize]) -> Vec<usize> {
    let mut s = vec![1; cards.len()];
    for i in (0..cards.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * cards[i + 1];
    }
    s
}

impl Factor {
    pub fn new(scope: Vec<usize>, cards: Vec<usize>, table: Vec<f64>) -> Result<Self, BnError> {
        let size: usize = cards.iter().product();
        if scope.len() != cards.len() || table.len() != size {
            return Err(BnError::ShapeMismatch(format!(
                "factor over {} variables with {} cells, expected {size}",
                scope.len(),
                table.len()
            )));
        }
        let mut seen = scope.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != scope.len() {
            return Err(BnError::ShapeMismatch("repeated variable in factor scope".into()));
        }
        if let Some(bad) = table.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(BnError::ShapeMismatch(format!("invalid factor entry {bad}")));
        }
        Ok(Self {
            scope,
            cards,
            table,
            exp: 0,
        })
    }

    /// The constant factor 1.
    pub fn unit() -> Self {
        Self {
            scope: Vec::new(),
            cards: Vec::new(),
            table: vec![1.0],
            exp: 0,
        }
    }

    pub fn scope(&self) -> &[usize] {
        &self.scope
    }

    pub fn cards(&self) -> &[usize] {
        &self.cards
    }

    /// Raw cells; the true values are these times `2^exp()`.
    pub fn table(&self) -> &[f64] {
        &self.table
    }

    pub fn exp(&self) -> i64 {
        self.exp
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    /// True (unscaled) values.
    pub fn values(&self) -> Vec<f64> {
        let k = (self.exp as f64).exp2();
        self.table.iter().map(|v| v * k).collect()
    }

    pub fn contains(&self, var: usize) -> bool {
        self.scope.contains(&var)
    }

    /// Value at a full assignment given in scope order.
    pub fn get(&self, assignment: &[usize]) -> f64 {
        let s = strides(&self.cards);
        let idx: usize = assignment.iter().zip(&s).map(|(a, s)| a * s).sum();
        self.table[idx] * (self.exp as f64).exp2()
    }

    /// Fix `var` to `value`, dropping it from the scope.
    pub fn reduce(&self, var: usize, value: usize) -> Factor {
        let Some(pos) = self.scope.iter().position(|v| *v == var) else {
            return self.clone();
        };
        let mut scope = self.scope.clone();
        let mut cards = self.cards.clone();
        scope.remove(pos);
        cards.remove(pos);
        let s = strides(&self.cards);
        let out_size: usize = cards.iter().product();
        let sub_strides: Vec<usize> = s
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != pos)
            .map(|(_, v)| *v)
            .collect();
        let base = value * s[pos];
        let mut table = vec![0.0; out_size];
        let mut assign = vec![0usize; cards.len()];
        let mut off = base;
        for cell in table.iter_mut() {
            *cell = self.table[off];
            advance(&mut assign, &cards, &mut [(&sub_strides, &mut off)]);
        }
        Factor {
            scope,
            cards,
            table,
            exp: self.exp,
        }
    }

    /// Product of `factors`, with `sum_out` (if any) marginalized in the same
    /// pass. The result scope is `out_scope`, which must cover every other
    /// variable mentioned. Rescaled so the largest cell lies in [0.5, 1).
    pub fn combine(
        factors: &[&Factor],
        out_scope: &[usize],
        out_cards: &[usize],
        sum_out: Option<(usize, usize)>,
    ) -> Factor {
        let out_size: usize = out_cards.iter().product();
        let per: Vec<(Vec<usize>, usize)> = factors
            .iter()
            .map(|f| {
                let s = strides(&f.cards);
                let map: Vec<usize> = out_scope
                    .iter()
                    .map(|v| f.scope.iter().position(|x| x == v).map_or(0, |p| s[p]))
                    .collect();
                let sv = sum_out
                    .and_then(|(var, _)| f.scope.iter().position(|x| *x == var))
                    .map_or(0, |p| s[p]);
                (map, sv)
            })
            .collect();
        let sum_card = sum_out.map_or(1, |(_, c)| c);
        let exp: i64 = factors.iter().map(|f| f.exp).sum();
        let mut table = vec![0.0; out_size];
        par::fill_chunks(&mut table, |start, chunk| {
            let mut assign = vec![0usize; out_cards.len()];
            let mut rem = start;
            for d in (0..out_cards.len()).rev() {
                assign[d] = rem % out_cards[d];
                rem /= out_cards[d];
            }
            let mut offs: Vec<usize> = per
                .iter()
                .map(|(map, _)| assign.iter().zip(map).map(|(a, s)| a * s).sum())
                .collect();
            for cell in chunk.iter_mut() {
                let mut acc = 0.0;
                for k in 0..sum_card {
                    let mut p = 1.0;
                    for (f, ((_, sv), off)) in factors.iter().zip(per.iter().zip(&offs)) {
                        p *= f.table[off + k * sv];
                    }
                    acc += p;
                }
                *cell = acc;
                // odometer step over the output scope
                let mut d = out_cards.len();
                while d > 0 {
                    d -= 1;
                    assign[d] += 1;
                    for (o, (map, _)) in offs.iter_mut().zip(&per) {
                        *o += map[d];
                    }
                    if assign[d] < out_cards[d] {
                        break;
                    }
                    for (o, (map, _)) in offs.iter_mut().zip(&per) {
                        *o -= map[d] * out_cards[d];
                    }
                    assign[d] = 0;
                }
            }
        });
        let mut f = Factor {
            scope: out_scope.to_vec(),
            cards: out_cards.to_vec(),
            table,
            exp,
        };
        f.rescale();
        f
    }

    pub fn product(&self, other: &Factor) -> Factor {
        let (scope, cards) = union_scope(&[self, other], None);
        Factor::combine(&[self, other], &scope, &cards, None)
    }

    pub fn marginalize(&self, var: usize) -> Factor {
        let Some(pos) = self.scope.iter().position(|v| *v == var) else {
            return self.clone();
        };
        let mut scope = self.scope.clone();
        let mut cards = self.cards.clone();
        scope.remove(pos);
        let c = cards.remove(pos);
        Factor::combine(&[self], &scope, &cards, Some((var, c)))
    }

    /// Same values with the scope permuted to `order`.
    pub fn reorder(&self, order: &[usize]) -> Factor {
        assert_eq!(order.len(), self.scope.len(), "reorder needs the full scope");
        let cards: Vec<usize> = order
            .iter()
            .map(|v| self.cards[self.scope.iter().position(|x| x == v).expect("variable in scope")])
            .collect();
        let mut f = Factor::combine(&[self], order, &cards, None);
        // combine rescales; undo to keep this a pure permutation
        f.table = f.table.iter().map(|v| v * ((f.exp - self.exp) as f64).exp2()).collect();
        f.exp = self.exp;
        f
    }

    /// Normalized copy and `log2` of the normalizing constant.
    pub fn normalized(&self) -> (Factor, f64) {
        let z: f64 = self.table.iter().sum();
        let mut f = self.clone();
        if z > 0.0 {
            for v in &mut f.table {
                *v /= z;
            }
        }
        f.exp = 0;
        (f, z.log2() + self.exp as f64)
    }

    fn rescale(&mut self) {
        let max = self.table.iter().copied().fold(0.0, f64::max);
        if max == 0.0 || !max.is_finite() {
            return;
        }
        let e = max.log2().floor() as i64 + 1;
        if e == 0 {
            return;
        }
        let k = (-e as f64).exp2();
        for v in &mut self.table {
            *v *= k;
        }
        self.exp += e;
    }
}

/// Sorted union of the factors' scopes, without `except`.
pub(crate) fn union_scope(factors: &[&Factor], except: Option<usize>) -> (Vec<usize>, Vec<usize>) {
    let mut pairs: Vec<(usize, usize)> = factors
        .iter()
        .flat_map(|f| f.scope.iter().copied().zip(f.cards.iter().copied()))
        .filter(|(v, _)| Some(*v) != except)
        .collect();
    pairs.sort_unstable();
    pairs.dedup_by_key(|p| p.0);
    pairs.into_iter().unzip()
}

fn advance(assign: &mut [usize], cards: &[usize], offs: &mut [(&Vec<usize>, &mut usize)]) {
    let mut d = cards.len();
    while d > 0 {
        d -= 1;
        assign[d] += 1;
        for (s, o) in offs.iter_mut() {
            **o += s[d];
        }
        if assign[d] < cards[d] {
            return;
        }
        for (s, o) in offs.iter_mut() {
            **o -= s[d] * cards[d];
        }
        assign[d] = 0;
    }
}
