use std::collections::BTreeMap;

use proptest::prelude::*;

use spook::bn::{
    conditional_query, enumerate_marginal, query, query_repeated, query_with, triangulation_stats, BnError,
    DiscreteNetwork, Factor, VeOptions, DEFAULT_STATE_CAP,
};
use spook::par;

#[derive(Clone, Debug)]
struct NetSpec {
    cards: Vec<usize>,
    parents: Vec<Vec<usize>>,
    weights: Vec<Vec<f64>>,
}

fn net_spec(max_nodes: usize) -> impl Strategy<Value = NetSpec> {
    (2..=max_nodes)
        .prop_flat_map(|n| {
            (
                prop::collection::vec(2usize..=3, n),
                prop::collection::vec(prop::collection::vec(any::<prop::sample::Index>(), 0..=3), n),
            )
        })
        .prop_flat_map(|(cards, picks)| {
            let parents: Vec<Vec<usize>> = picks
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    let mut ps: Vec<usize> = if i == 0 {
                        Vec::new()
                    } else {
                        p.iter().map(|x| x.index(i)).collect()
                    };
                    ps.sort();
                    ps.dedup();
                    ps
                })
                .collect();
            let sizes: Vec<usize> = parents
                .iter()
                .zip(&cards)
                .map(|(ps, c)| ps.iter().map(|p| cards[*p]).product::<usize>() * c)
                .collect();
            let weights = sizes
                .iter()
                .map(|s| prop::collection::vec(0.05f64..1.0, *s))
                .collect::<Vec<_>>();
            (Just(cards), Just(parents), weights)
        })
        .prop_map(|(cards, parents, weights)| NetSpec {
            cards,
            parents,
            weights,
        })
}

fn build(spec: &NetSpec) -> DiscreteNetwork {
    let mut net = DiscreteNetwork::new();
    for (i, ((c, ps), w)) in spec.cards.iter().zip(&spec.parents).zip(&spec.weights).enumerate() {
        let cpt: Vec<f64> = w
            .chunks(*c)
            .flat_map(|row| {
                let z: f64 = row.iter().sum();
                row.iter().map(move |x| x / z)
            })
            .collect();
        let range = (0..*c).map(|v| format!("v{v}")).collect();
        net.add_node(format!("x{i}"), range, ps.clone(), cpt).unwrap();
    }
    net
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn elimination_matches_enumeration(spec in net_spec(8), t in any::<prop::sample::Index>(), e in any::<prop::sample::Index>(), v in 0usize..2) {
        let net = build(&spec);
        let target = t.index(net.len());
        let observed = e.index(net.len());
        let mut ev = BTreeMap::new();
        if observed != target {
            ev.insert(observed, v);
        }
        let ve = query(&net, &[target], &ev).unwrap();
        let brute = enumerate_marginal(&net, &[target], &ev, DEFAULT_STATE_CAP).unwrap();
        let got = ve.values();
        prop_assert!((got.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (a, b) in got.iter().zip(&brute) {
            prop_assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn joint_targets_match_enumeration(spec in net_spec(7), a in any::<prop::sample::Index>(), b in any::<prop::sample::Index>()) {
        let net = build(&spec);
        let (a, b) = (a.index(net.len()), b.index(net.len()));
        prop_assume!(a != b);
        let ve = query(&net, &[a, b], &BTreeMap::new()).unwrap();
        let brute = enumerate_marginal(&net, &[a, b], &BTreeMap::new(), DEFAULT_STATE_CAP).unwrap();
        for (x, y) in ve.values().iter().zip(&brute) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn repeated_targets_place_mass_on_the_diagonal(spec in net_spec(6), t in any::<prop::sample::Index>()) {
        let net = build(&spec);
        let t = t.index(net.len());
        let (joint, _) = query_repeated(&net, &[t, t], &BTreeMap::new(), &VeOptions::default()).unwrap();
        let single = query(&net, &[t], &BTreeMap::new()).unwrap().values();
        let k = net.card(t);
        for i in 0..k {
            for j in 0..k {
                let want = if i == j { single[i] } else { 0.0 };
                prop_assert!((joint[i * k + j] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn max_clique_covers_every_family(spec in net_spec(8)) {
        let net = build(&spec);
        let stats = triangulation_stats(&net);
        let family = spec.parents.iter().map(|p| p.len() + 1).max().unwrap();
        prop_assert!(stats.max_clique >= family);
        prop_assert!(stats.max_clique <= net.len());
        let mut order = stats.order.clone();
        order.sort();
        prop_assert_eq!(order, (0..net.len()).collect::<Vec<_>>());
    }

    #[test]
    fn factor_product_commutes_up_to_order(a in prop::collection::vec(0.01f64..1.0, 6), b in prop::collection::vec(0.01f64..1.0, 4)) {
        let f = Factor::new(vec![0, 1], vec![2, 3], a).unwrap();
        let g = Factor::new(vec![1, 2], vec![3, 2], b[..].iter().cycle().take(6).copied().collect()).unwrap();
        let fg = f.product(&g);
        let gf = g.product(&f).reorder(fg.scope());
        for (x, y) in fg.values().iter().zip(gf.values()) {
            prop_assert!((x - y).abs() < 1e-12 * x.abs().max(1.0));
        }
        let total: f64 = fg.values().iter().sum();
        let summed: f64 = fg.marginalize(1).values().iter().sum();
        prop_assert!((total - summed).abs() < 1e-12 * total);
    }
}

#[test]
fn conditional_rows_equal_clamped_queries() {
    let mut net = DiscreteNetwork::new();
    let x = net.add_input("x", vec!["a".into(), "b".into(), "c".into()]).unwrap();
    let y = net
        .add_node(
            "y",
            vec!["n".into(), "y".into()],
            vec![x],
            vec![0.9, 0.1, 0.4, 0.6, 0.2, 0.8],
        )
        .unwrap();
    let z = net
        .add_node("z", vec!["lo".into(), "hi".into()], vec![y], vec![0.7, 0.3, 0.1, 0.9])
        .unwrap();
    let (rows, _) = conditional_query(&net, &[z, y], x, &VeOptions::default()).unwrap();
    assert_eq!(rows.len(), 3);
    for (v, row) in rows.iter().enumerate() {
        let py = [[0.9, 0.1], [0.4, 0.6], [0.2, 0.8]][v];
        let pz = [[0.7, 0.3], [0.1, 0.9]];
        for zi in 0..2 {
            for yi in 0..2 {
                let want = py[yi] * pz[yi][zi];
                assert!((row[zi * 2 + yi] - want).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn impossible_evidence_is_reported() {
    let mut net = DiscreteNetwork::new();
    let a = net
        .add_node("a", vec!["f".into(), "t".into()], vec![], vec![1.0, 0.0])
        .unwrap();
    let b = net
        .add_node("b", vec!["f".into(), "t".into()], vec![a], vec![0.5, 0.5, 0.5, 0.5])
        .unwrap();
    let ev = BTreeMap::from([(a, 1)]);
    assert_eq!(query(&net, &[b], &ev).unwrap_err(), BnError::ImpossibleEvidence);
}

#[test]
fn factor_budget_is_enforced() {
    let mut net = DiscreteNetwork::new();
    let mut ids = Vec::new();
    for i in 0..6 {
        ids.push(
            net.add_node(format!("r{i}"), vec!["0".into(), "1".into()], vec![], vec![0.5, 0.5])
                .unwrap(),
        );
    }
    let opts = VeOptions {
        max_cells: 8,
        ..VeOptions::default()
    };
    assert!(matches!(
        query_with(&net, &ids, &BTreeMap::new(), &opts),
        Err(BnError::FactorTooLarge { .. })
    ));
}

#[test]
fn rejects_non_stochastic_rows() {
    let mut net = DiscreteNetwork::new();
    let err = net
        .add_node("a", vec!["0".into(), "1".into()], vec![], vec![0.5, 0.6])
        .unwrap_err();
    assert!(matches!(err, BnError::NotStochastic(_)));
}

#[test]
fn parallel_and_sequential_fills_agree_bitwise() {
    // a chain wide enough for its joint to cross the parallel threshold
    let mut net = DiscreteNetwork::new();
    let mut ids = Vec::new();
    for i in 0..16 {
        let parents = if i == 0 { vec![] } else { vec![i - 1] };
        let cpt = if i == 0 {
            vec![0.3, 0.7]
        } else {
            vec![0.6, 0.4, 0.25, 0.75]
        };
        ids.push(
            net.add_node(format!("c{i}"), vec!["0".into(), "1".into()], parents, cpt)
                .unwrap(),
        );
    }
    par::set_parallel(true);
    let a = query(&net, &ids, &BTreeMap::new()).unwrap();
    par::set_parallel(false);
    let b = query(&net, &ids, &BTreeMap::new()).unwrap();
    par::set_parallel(true);
    assert_eq!(a.values(), b.values());
}
