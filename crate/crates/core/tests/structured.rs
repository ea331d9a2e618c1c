mod common;

use std::sync::Arc;

use proptest::prelude::*;

use common::{fixture, index_of, max_abs_diff, random_kb};
use spook::bench::{generate_battalion_kb, DEFAULT_PROBE};
use spook::kbmc::{answer_query_kbmc, KbmcEngine, KbmcOptions};
use spook::lang::{parse_kb, parse_query, SourceKb};
use spook::model::{AttributeChain, KbIndex};
use spook::structured::{solve_top_level, InputRef, StructuredEngine, StructuredOptions, SubQuery};
use spook::InferenceError;

fn engine(index: &Arc<KbIndex>, reuse: bool, naive: bool) -> StructuredEngine {
    StructuredEngine::new(
        index.clone(),
        StructuredOptions {
            reuse,
            naive_quantifiers: naive,
            ..StructuredOptions::default()
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    /// Every structured mode agrees with flat grounding.
    #[test]
    fn modes_agree_with_grounding(seed in any::<u64>()) {
        let r = random_kb(seed);
        let index = index_of(&r.source);
        for text in &r.queries {
            let q = parse_query(text, &index).unwrap();
            let flat = KbmcEngine::new(index.clone(), KbmcOptions::default()).query(&q).unwrap().0;
            for (reuse, naive) in [(true, false), (false, false), (true, true)] {
                let got = engine(&index, reuse, naive).query(&q).unwrap().0;
                let d = got.max_abs_diff(&flat);
                prop_assert!(d < 1e-9, "seed {seed} `{text}` reuse={reuse} naive={naive}: {d:e}");
            }
        }
    }
}

#[test]
fn one_shot_entry_points_agree() {
    let src = fixture("terrain");
    let kb = parse_kb(&src).unwrap();
    let index = index_of(&src);
    let q = parse_query("scout.detected | scout.season = wet", &index).unwrap();
    let a = solve_top_level(&kb, &q).unwrap();
    let b = answer_query_kbmc(&kb, &q).unwrap();
    assert!(a.max_abs_diff(&b) < 1e-12);
}

#[test]
fn subquery_rows_are_conditionals_given_the_interface() {
    let index = index_of(&fixture("squad"));
    let e = engine(&index, true, false);
    let q = SubQuery::new("Soldier", [AttributeChain::single("armed")], Some("squad".into()));
    let r = e.solve_query(&q).unwrap();
    assert_eq!(
        r.inputs,
        vec![InputRef::Entry(AttributeChain::new(vec!["alert".into()]).unwrap())]
    );
    assert_eq!(r.input_ranges, vec![vec!["no".to_string(), "yes".to_string()]]);
    // exactly the CPD of `armed` given the squad's alert level
    assert!(max_abs_diff(&r.rows[0], &[0.4, 0.6]) < 1e-15);
    assert!(max_abs_diff(&r.rows[1], &[0.15, 0.85]) < 1e-15);
}

#[test]
fn subquery_rows_are_distributions() {
    let index = index_of(&generate_battalion_kb(2, 2));
    let e = engine(&index, true, false);
    let outputs = ["operational", "threat", "cover"].map(AttributeChain::single);
    let q = SubQuery::new("Battery", outputs, Some("in-battalion".into()));
    let r = e.solve_query(&q).unwrap();
    let configs: usize = r.input_ranges.iter().map(Vec::len).product();
    assert_eq!(r.rows.len(), configs);
    assert_eq!(r.inputs.len(), r.input_ranges.len());
    for row in &r.rows {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
    assert!(r.max_clique >= r.local_max_clique);
}

#[test]
fn reuse_only_changes_the_work_done() {
    let index = index_of(&generate_battalion_kb(2, 4));
    let q = parse_query(DEFAULT_PROBE, &index).unwrap();
    let with = engine(&index, true, false);
    let without = engine(&index, false, false);
    let (a, sa) = with.query(&q).unwrap();
    let (b, sb) = without.query(&q).unwrap();
    assert!(a.max_abs_diff(&b) < 1e-12);
    assert!(sa.cache.hits > 0);
    assert_eq!(sb.cache.hits, 0);
    assert!(sa.cache.misses < sb.cache.misses);
    // a second query on the same engine is served from the cache
    let before = with.cache_stats().misses;
    with.query(&q).unwrap();
    assert_eq!(with.cache_stats().misses, before);
}

#[test]
fn contradictory_evidence_is_rejected() {
    let index = index_of(&fixture("diamond"));
    let q = parse_query("plant.alarm | plant.state = on, plant.state = off", &index).unwrap();
    assert!(matches!(
        engine(&index, true, false).query(&q),
        Err(InferenceError::ContradictoryEvidence(_))
    ));
}

#[test]
fn nesting_beyond_the_depth_cap_fails() {
    let index = index_of(&generate_battalion_kb(1, 1));
    let q = parse_query(DEFAULT_PROBE, &index).unwrap();
    let shallow = StructuredEngine::new(
        index,
        StructuredOptions {
            depth_cap: 1,
            ..StructuredOptions::default()
        },
    );
    assert!(matches!(
        shallow.query(&q),
        Err(InferenceError::RecursionDepthExceeded { .. })
    ));
}

#[test]
fn recursive_self_dependence_is_rejected_up_front() {
    let text = "class Link {\n  complex next : Link\n  simple x {a, b} parents(next.x) cpd [0.9, 0.1; 0.2, 0.8]\n}\n";
    let kb = parse_kb(&SourceKb::new(text, "chain.spook")).unwrap();
    let err = KbIndex::new(kb).unwrap_err();
    assert!(err.to_string().contains("cycle"), "{err}");
}

#[test]
fn local_cliques_stay_below_the_flat_clique() {
    let index = index_of(&generate_battalion_kb(3, 2));
    let q = parse_query(DEFAULT_PROBE, &index).unwrap();
    let (_, stats) = engine(&index, true, false).query(&q).unwrap();
    let flat = KbmcEngine::new(index, KbmcOptions::default())
        .flat_stats()
        .unwrap()
        .max_clique;
    assert!(stats.max_local_clique < flat, "{} vs {flat}", stats.max_local_clique);
}
