mod common;

use common::{brute_force, fixture, index_of};
use spook::bench::generate_battalion_kb;
use spook::kbmc::{counting_cpt, KbmcEngine, KbmcOptions};
use spook::lang::parse_query;
use spook::InferenceError;

/// P(alarm) for the diamond fixture, summed by hand over the source state
/// and both sensor readings.
fn diamond_alarm(state_on_evidence: Option<bool>) -> [f64; 2] {
    let p_state = [0.3, 0.7];
    let left = [[0.85, 0.15], [0.2, 0.8]];
    let right = [[0.7, 0.3], [0.1, 0.9]];
    let loud = [[0.05, 0.6], [0.65, 0.98]];
    let mut p_loud = 0.0;
    let mut z = 0.0;
    for s in 0..2 {
        if state_on_evidence.is_some_and(|on| on != (s == 1)) {
            continue;
        }
        z += p_state[s];
        for l in 0..2 {
            for r in 0..2 {
                p_loud += p_state[s] * left[s][l] * right[s][r] * loud[l][r];
            }
        }
    }
    [1.0 - p_loud / z, p_loud / z]
}

#[test]
fn diamond_matches_hand_summation() {
    let index = index_of(&fixture("diamond"));
    let engine = KbmcEngine::new(index.clone(), KbmcOptions::default());
    for (text, ev) in [("plant.alarm", None), ("plant.alarm | plant.state = on", Some(true))] {
        let got = engine.query(&parse_query(text, &index).unwrap()).unwrap().0.joint;
        let want = diamond_alarm(ev);
        assert!((got[1] - want[1]).abs() < 1e-12, "{text}: {got:?} vs {want:?}");
    }
}

#[test]
fn evidence_below_the_target_flows_upward() {
    let index = index_of(&fixture("diamond"));
    let q = parse_query("plant.state | plant.left.reading = high, plant.alarm = loud", &index).unwrap();
    let got = KbmcEngine::new(index.clone(), KbmcOptions::default())
        .query(&q)
        .unwrap()
        .0
        .joint;
    let want = brute_force(&index, &q, 1 << 20).unwrap();
    assert!((got[0] - want[0]).abs() < 1e-12);
    assert!(got[1] > 0.7, "observing a high reading should raise P(on)");
}

#[test]
fn counting_cpt_is_deterministic() {
    // two binary parents counted on value 1
    let cpt = counting_cpt(2, 2, 1, 2, false, 16).unwrap();
    let rows: Vec<&[f64]> = cpt.chunks(3).collect();
    assert_eq!(
        rows,
        vec![
            &[1.0, 0.0, 0.0][..],
            &[0.0, 1.0, 0.0],
            &[0.0, 1.0, 0.0],
            &[0.0, 0.0, 1.0]
        ]
    );
    // a gate of 1 only counts the first parent
    let gated = counting_cpt(2, 2, 1, 2, true, 16).unwrap();
    let gate1: Vec<&[f64]> = gated[12..24].chunks(3).collect();
    assert_eq!(
        gate1,
        vec![
            &[1.0, 0.0, 0.0][..],
            &[1.0, 0.0, 0.0],
            &[0.0, 1.0, 0.0],
            &[0.0, 1.0, 0.0]
        ]
    );
    assert!(matches!(
        counting_cpt(20, 2, 1, 20, false, 16),
        Err(InferenceError::NaiveCapExceeded { n: 20, cap: 16 })
    ));
}

#[test]
fn grounding_is_cached_and_extended_per_query() {
    let index = index_of(&generate_battalion_kb(1, 2));
    let engine = KbmcEngine::new(index.clone(), KbmcOptions::default());
    let base = engine.grounding().unwrap();
    let q = parse_query("battery-1.launchers.status | battery-2.hit = yes", &index).unwrap();
    let (g, targets, evidence) = engine.prepare(&q).unwrap();
    assert!(g.network().len() >= base.network().len());
    assert_eq!(targets.len(), 1);
    assert_eq!(evidence.len(), 1);
    assert!(std::sync::Arc::ptr_eq(&base, &engine.grounding().unwrap()));
}

#[test]
fn asserted_fillers_are_observed_in_the_grounding() {
    let index = index_of(&generate_battalion_kb(1, 3));
    let engine = KbmcEngine::new(index.clone(), KbmcOptions::default());
    let q = parse_query("battalion-charlie.num-batteries", &index).unwrap();
    let joint = engine.query(&q).unwrap().0.joint;
    assert_eq!(joint, vec![0.0, 0.0, 0.0, 1.0]);
}

#[test]
fn conflicting_observations_are_rejected() {
    let index = index_of(&fixture("squad"));
    let q = parse_query("bravo.strength | bravo.alert = yes, bravo.alert = no", &index).unwrap();
    let err = KbmcEngine::new(index, KbmcOptions::default()).query(&q).unwrap_err();
    assert!(matches!(err, InferenceError::ContradictoryEvidence(_)));
    assert_eq!(err.code(), "contradictory-evidence");
}

#[test]
fn impossible_evidence_is_an_error() {
    let index = index_of(&fixture("squad"));
    // the count of armed soldiers cannot exceed the squad size
    let q = parse_query("bravo.strength | bravo.size = 1, bravo.ready = 3", &index).unwrap();
    let err = KbmcEngine::new(index, KbmcOptions::default()).query(&q).unwrap_err();
    assert_eq!(err.code(), "impossible-evidence");
}
