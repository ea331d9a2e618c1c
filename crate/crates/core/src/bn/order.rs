use std::collections::BTreeSet;

use serde::Serialize;

use super::DiscreteNetwork;

/// Greedy elimination order and the cliques it induces.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CliqueStats {
    pub order: Vec<usize>,
    /// Largest clique, counted in nodes.
    pub max_clique: usize,
    /// Sum over cliques of their joint table size.
    pub total_cells: u128,
}

struct Graph {
    words: usize,
    bits: Vec<u64>,
    adj: Vec<Vec<usize>>,
}

impl Graph {
    fn new(n: usize) -> Self {
        let words = n.div_ceil(64).max(1);
        Self {
            words,
            bits: vec![0; n * words],
            adj: vec![Vec::new(); n],
        }
    }

    fn has(&self, a: usize, b: usize) -> bool {
        self.bits[a * self.words + b / 64] >> (b % 64) & 1 == 1
    }

    fn connect(&mut self, a: usize, b: usize) -> bool {
        if a == b || self.has(a, b) {
            return false;
        }
        self.bits[a * self.words + b / 64] |= 1 << (b % 64);
        self.bits[b * self.words + a / 64] |= 1 << (a % 64);
        self.adj[a].push(b);
        self.adj[b].push(a);
        true
    }

    fn remove(&mut self, v: usize) {
        for n in std::mem::take(&mut self.adj[v]) {
            self.adj[n].retain(|x| *x != v);
            self.bits[n * self.words + v / 64] &= !(1 << (v % 64));
            self.bits[v * self.words + n / 64] &= !(1 << (n % 64));
        }
    }

    fn fill(&self, v: usize) -> usize {
        let n = &self.adj[v];
        let mut missing = 0;
        for i in 0..n.len() {
            for j in i + 1..n.len() {
                if !self.has(n[i], n[j]) {
                    missing += 1;
                }
            }
        }
        missing
    }
}

/// Min-fill elimination over an interaction graph on local indices
/// `0..cards.len()`, whose cliques are `scopes`. Only indices with
/// `eliminate[i]` are eliminated; ties go to the smallest index.
pub(crate) fn min_fill(cards: &[usize], scopes: &[Vec<usize>], eliminate: &[bool]) -> CliqueStats {
    let n = cards.len();
    let mut g = Graph::new(n);
    for s in scopes {
        for i in 0..s.len() {
            for j in i + 1..s.len() {
                g.connect(s[i], s[j]);
            }
        }
    }
    let mut score = vec![0usize; n];
    let mut heap = BTreeSet::new();
    for v in 0..n {
        if eliminate[v] {
            score[v] = g.fill(v);
            heap.insert((score[v], v));
        }
    }
    let mut done = vec![false; n];
    let mut order = Vec::new();
    let mut max_clique = 0;
    let mut total_cells: u128 = 0;
    while let Some(&(s, v)) = heap.iter().next() {
        heap.remove(&(s, v));
        let nbrs = g.adj[v].clone();
        max_clique = max_clique.max(nbrs.len() + 1);
        let cells = nbrs
            .iter()
            .fold(cards[v] as u128, |acc, u| acc.saturating_mul(cards[*u] as u128));
        total_cells = total_cells.saturating_add(cells);
        for i in 0..nbrs.len() {
            for j in i + 1..nbrs.len() {
                g.connect(nbrs[i], nbrs[j]);
            }
        }
        g.remove(v);
        done[v] = true;
        order.push(v);
        let mut touched: BTreeSet<usize> = nbrs.iter().copied().collect();
        for u in &nbrs {
            touched.extend(g.adj[*u].iter().copied());
        }
        for u in touched {
            if eliminate[u] && !done[u] {
                let f = g.fill(u);
                if f != score[u] {
                    heap.remove(&(score[u], u));
                    score[u] = f;
                    heap.insert((f, u));
                }
            }
        }
    }
    // variables kept to the end form one final clique
    let kept: Vec<usize> = (0..n).filter(|v| !eliminate[*v]).collect();
    if !kept.is_empty() {
        max_clique = max_clique.max(kept.len());
    }
    CliqueStats {
        order,
        max_clique,
        total_cells,
    }
}

/// Min-fill triangulation of the moral graph of the whole network.
pub fn triangulation_stats(net: &DiscreteNetwork) -> CliqueStats {
    let cards: Vec<usize> = net.nodes().iter().map(|n| n.card()).collect();
    let scopes: Vec<Vec<usize>> = net
        .nodes()
        .iter()
        .enumerate()
        .map(|(id, n)| {
            let mut s = n.parents.clone();
            s.push(id);
            s
        })
        .collect();
    min_fill(&cards, &scopes, &vec![true; cards.len()])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bin() -> Vec<String> {
        vec!["f".into(), "t".into()]
    }

    #[test]
    fn chain_has_cliques_of_two() {
        let mut net = DiscreteNetwork::new();
        let mut prev = net.add_node("x0", bin(), vec![], vec![0.5, 0.5]).unwrap();
        for i in 1..5 {
            prev = net
                .add_node(format!("x{i}"), bin(), vec![prev], vec![0.9, 0.1, 0.2, 0.8])
                .unwrap();
        }
        let s = triangulation_stats(&net);
        assert_eq!(s.max_clique, 2);
        assert_eq!(s.order.len(), 5);
    }

    #[test]
    fn complete_graph_of_four() {
        let mut net = DiscreteNetwork::new();
        let a = net.add_node("a", bin(), vec![], vec![0.5, 0.5]).unwrap();
        let b = net.add_node("b", bin(), vec![a], vec![0.5; 4]).unwrap();
        let c = net.add_node("c", bin(), vec![a, b], vec![0.5; 8]).unwrap();
        net.add_node("d", bin(), vec![a, b, c], vec![0.5; 16]).unwrap();
        assert_eq!(triangulation_stats(&net).max_clique, 4);
    }

    #[test]
    fn ties_break_toward_smaller_ids() {
        let mut net = DiscreteNetwork::new();
        for i in 0..3 {
            net.add_node(format!("x{i}"), bin(), vec![], vec![0.5, 0.5]).unwrap();
        }
        assert_eq!(triangulation_stats(&net).order, vec![0, 1, 2]);
    }
}
