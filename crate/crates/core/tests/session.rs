mod common;

use common::fixture;
use spook::query::ChainRef;
use spook::session::{Backend, GraphEdgeKind, GraphNodeKind, SessionError, Workspace};

fn chain(text: &str) -> ChainRef {
    ChainRef::parse(text).unwrap()
}

#[test]
fn observe_query_retract_round_trip() {
    let ws = Workspace::new();
    let kb = ws.load_kb(fixture("diamond")).unwrap();
    assert_eq!(kb.id, "kb-1");
    let sid = ws.create_session(&kb.id, Backend::Structured).unwrap();
    let session = ws.session(&sid).unwrap();
    let mut s = session.lock();

    let prior = s.query(vec![chain("plant.state")]).unwrap();
    s.observe(chain("plant.alarm"), "loud").unwrap();
    let posterior = s.query(vec![chain("plant.state")]).unwrap();
    assert!(posterior.result.joint[1] > prior.result.joint[1]);
    assert_eq!(posterior.query, "query plant.state | plant.alarm = loud");

    s.retract(&chain("plant.alarm")).unwrap();
    let again = s.query(vec![chain("plant.state")]).unwrap();
    assert!(again.result.max_abs_diff(&prior.result) < 1e-15);
    assert_eq!(s.history().len(), 3);
}

#[test]
fn observations_are_checked_and_idempotent() {
    let ws = Workspace::new();
    let kb = ws.load_kb(fixture("squad")).unwrap();
    let sid = ws.create_session(&kb.id, Backend::Kbmc).unwrap();
    let session = ws.session(&sid).unwrap();
    let mut s = session.lock();
    s.observe(chain("bravo.alert"), "yes").unwrap();
    assert_eq!(s.observe(chain("bravo.alert"), "yes").unwrap().len(), 1);
    let clash = s.observe(chain("bravo.alert"), "no").unwrap_err();
    assert_eq!(clash.code(), "contradictory-evidence");
    assert_eq!(
        s.observe(chain("bravo.alert"), "maybe").unwrap_err().code(),
        "bad-value"
    );
    assert_eq!(
        s.observe(chain("ghost.alert"), "yes").unwrap_err().code(),
        "unknown-instance"
    );
    assert_eq!(s.evidence().len(), 1);
    assert!(matches!(
        s.retract(&chain("bravo.size")),
        Err(SessionError::NotObserved(_))
    ));
}

#[test]
fn both_backends_answer_identically() {
    let ws = Workspace::new();
    let kb = ws.load_kb(fixture("terrain")).unwrap();
    let mut answers = Vec::new();
    for backend in [Backend::Structured, Backend::Kbmc] {
        let sid = ws.create_session(&kb.id, backend).unwrap();
        let session = ws.session(&sid).unwrap();
        let mut s = session.lock();
        s.observe(chain("scout.season"), "wet").unwrap();
        answers.push(
            s.query(vec![chain("scout.detected"), chain("scout.area-kind")])
                .unwrap(),
        );
    }
    assert!(answers[0].result.max_abs_diff(&answers[1].result) < 1e-12);
    assert_eq!(answers[1].backend, Backend::Kbmc);
}

#[test]
fn bad_documents_report_locations() {
    let ws = Workspace::new();
    let err = ws
        .load_kb(spook::lang::SourceKb::new(
            "class A {\n  simple x {a, b\n}",
            "bad.spook",
        ))
        .err()
        .unwrap();
    assert_eq!(err.code(), "syntax-error");
    assert!(err.location().unwrap().starts_with("bad.spook:"));
    let invalid = ws
        .load_kb(spook::lang::SourceKb::new(
            "class A {\n  simple x {a, b} cpd [0.2, 0.2]\n}\n",
            "bad.spook",
        ))
        .err()
        .unwrap();
    assert_eq!(invalid.code(), "invalid-kb");
    assert!(invalid.to_string().contains("bad.spook:2:"), "{invalid}");
}

#[test]
fn unknown_ids_are_errors() {
    let ws = Workspace::new();
    assert_eq!(
        ws.create_session("kb-9", Backend::Structured).unwrap_err().code(),
        "unknown-kb"
    );
    assert_eq!(ws.session("s-9").err().unwrap().code(), "unknown-session");
}

#[test]
fn model_graph_lists_classes_instances_and_relations() {
    let ws = Workspace::new();
    let kb = ws.load_kb(fixture("terrain")).unwrap();
    let g = ws.model_graph(&kb.id).unwrap();
    let kind = |id: &str| g.nodes.iter().find(|n| n.id == id).map(|n| n.kind);
    assert_eq!(kind("Forest"), Some(GraphNodeKind::Class));
    assert_eq!(kind("scout"), Some(GraphNodeKind::Instance));
    assert!(g
        .edges
        .iter()
        .any(|e| e.kind == GraphEdgeKind::IsA && e.from == "Forest" && e.to == "Area"));
    assert!(g
        .edges
        .iter()
        .any(|e| e.kind == GraphEdgeKind::Complex && e.from == "Patrol" && e.to == "Area"));
    assert!(g
        .edges
        .iter()
        .any(|e| e.kind == GraphEdgeKind::InstanceOf && e.from == "ridge" && e.to == "Area"));
}

#[test]
fn asserted_fillers_appear_as_edges() {
    let ws = Workspace::new();
    let kb = ws.load_kb(spook::bench::generate_battalion_kb(1, 2)).unwrap();
    let g = kb.graph();
    let fillers: Vec<_> = g.edges.iter().filter(|e| e.kind == GraphEdgeKind::Filler).collect();
    assert!(fillers.iter().any(|e| e.from == "battalion-charlie"
        && e.to == "battery-2"
        && e.attribute.as_deref() == Some("has-battery")));
    assert!(fillers
        .iter()
        .any(|e| e.from == "battery-1" && e.to == "battalion-charlie"));
}

#[test]
fn sessions_on_one_kb_are_isolated() {
    let ws = Workspace::new();
    let kb = ws.load_kb(fixture("diamond")).unwrap();
    let a = ws.create_session(&kb.id, Backend::Structured).unwrap();
    let b = ws.create_session(&kb.id, Backend::Structured).unwrap();
    assert_ne!(a, b);
    ws.session(&a)
        .unwrap()
        .lock()
        .observe(chain("plant.alarm"), "loud")
        .unwrap();
    let sb = ws.session(&b).unwrap();
    let mut sb = sb.lock();
    assert!(sb.evidence().is_empty());
    let prior = sb.query(vec![chain("plant.state")]).unwrap();
    assert!((prior.result.joint[1] - 0.7).abs() < 1e-12);
    assert_eq!(ws.session(&a).unwrap().lock().history().len(), 0);
}

#[test]
fn empty_kb_has_an_empty_graph() {
    let ws = Workspace::new();
    let kb = ws.load_kb(spook::lang::SourceKb::new("", "empty.spook")).unwrap();
    assert_eq!(ws.model_graph(&kb.id).unwrap(), Default::default());
}
