//! Loaded knowledge bases and stateful evidence sessions, shared by the REPL
//! and the HTTP service.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Instant;

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};

use crate::kbmc::{KbmcEngine, KbmcOptions};
use crate::lang::{check_observation, locate_diagnostics, parse_kb_with_spans, resolve_target, LangError, SourceKb};
use crate::model::{validate_kb, AttributeDecl, Cardinality, Filler, KbIndex};
use crate::query::{ChainRef, Observation, QueryExpr, QueryResult};
use crate::structured::{CacheStats, StructuredEngine, StructuredOptions};
use crate::InferenceError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    #[default]
    Structured,
    Kbmc,
}

impl FromStr for Backend {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "structured" => Ok(Backend::Structured),
            "kbmc" => Ok(Backend::Kbmc),
            other => Err(format!("unknown backend `{other}` (expected `structured` or `kbmc`)")),
        }
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Backend::Structured => "structured",
            Backend::Kbmc => "kbmc",
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error("unknown knowledge base `{0}`")]
    UnknownKb(String),
    #[error("unknown session `{0}`")]
    UnknownSession(String),
    #[error(transparent)]
    Syntax(#[from] LangError),
    #[error("knowledge base failed validation:\n{}", .0.join("\n"))]
    Invalid(Vec<String>),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error("`{0}` is not observed")]
    NotObserved(String),
}

impl SessionError {
    /// Stable kebab-case code for error bodies.
    pub fn code(&self) -> &'static str {
        match self {
            SessionError::UnknownKb(_) => "unknown-kb",
            SessionError::UnknownSession(_) => "unknown-session",
            SessionError::Syntax(_) => "syntax-error",
            SessionError::Invalid(_) => "invalid-kb",
            SessionError::Inference(e) => e.code(),
            SessionError::NotObserved(_) => "not-observed",
        }
    }

    /// `file:line:col` of a syntax error, when there is one.
    pub fn location(&self) -> Option<String> {
        match self {
            SessionError::Syntax(e) => Some(format!("{}:{}", e.file, e.loc)),
            _ => None,
        }
    }
}

impl From<crate::lang::QueryError> for SessionError {
    fn from(e: crate::lang::QueryError) -> Self {
        SessionError::Inference(e.into())
    }
}

/// A parsed, validated KB with one engine per backend. Engines are shared
/// by every session on the KB so the structured cache persists.
pub struct LoadedKb {
    pub id: String,
    pub source: SourceKb,
    pub index: Arc<KbIndex>,
    kbmc: KbmcEngine,
    structured: StructuredEngine,
}

impl LoadedKb {
    pub fn load(id: impl Into<String>, source: SourceKb) -> Result<Self, SessionError> {
        let (kb, spans) = parse_kb_with_spans(&source)?;
        let report = validate_kb(&kb);
        if !report.is_ok() {
            return Err(SessionError::Invalid(locate_diagnostics(
                &report,
                &spans,
                &source.provenance,
            )));
        }
        let index = Arc::new(KbIndex::new(kb).map_err(InferenceError::from)?);
        Ok(Self {
            id: id.into(),
            source,
            kbmc: KbmcEngine::new(index.clone(), KbmcOptions::default()),
            structured: StructuredEngine::new(index.clone(), StructuredOptions::default()),
            index,
        })
    }

    pub fn answer(&self, backend: Backend, q: &QueryExpr) -> Result<QueryResult, InferenceError> {
        match backend {
            Backend::Structured => self.structured.query(q).map(|(r, _)| r),
            Backend::Kbmc => self.kbmc.query(q).map(|(r, _)| r),
        }
    }

    pub fn cache_stats(&self) -> CacheStats {
        self.structured.cache_stats()
    }

    pub fn graph(&self) -> ModelGraph {
        model_graph(&self.index)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub query: String,
    pub backend: Backend,
    pub result: QueryResult,
    pub seconds: f64,
}

/// Evidence and query history against one KB. Operations on a session are
/// serialized by its owner.
pub struct Session {
    pub id: String,
    pub kb: Arc<LoadedKb>,
    pub backend: Backend,
    evidence: Vec<Observation>,
    history: Vec<HistoryEntry>,
}

impl Session {
    pub fn new(id: impl Into<String>, kb: Arc<LoadedKb>, backend: Backend) -> Self {
        Self {
            id: id.into(),
            kb,
            backend,
            evidence: Vec::new(),
            history: Vec::new(),
        }
    }

    pub fn evidence(&self) -> &[Observation] {
        &self.evidence
    }

    pub fn history(&self) -> &[HistoryEntry] {
        &self.history
    }

    /// Record `target = value`. Re-observing the same value is a no-op; a
    /// different value must be retracted first.
    pub fn observe(&mut self, target: ChainRef, value: impl Into<String>) -> Result<&[Observation], SessionError> {
        let obs = Observation {
            target,
            value: value.into(),
        };
        check_observation(&self.kb.index, &obs)?;
        match self.evidence.iter().find(|o| o.target == obs.target) {
            Some(old) if old.value == obs.value => {}
            Some(_) => return Err(InferenceError::ContradictoryEvidence(obs.target.to_string()).into()),
            None => self.evidence.push(obs),
        }
        Ok(&self.evidence)
    }

    pub fn retract(&mut self, target: &ChainRef) -> Result<&[Observation], SessionError> {
        let pos = self
            .evidence
            .iter()
            .position(|o| o.target == *target)
            .ok_or_else(|| SessionError::NotObserved(target.to_string()))?;
        self.evidence.remove(pos);
        Ok(&self.evidence)
    }

    /// Posterior over `targets` given the session evidence, appended to the
    /// history.
    pub fn query(&mut self, targets: Vec<ChainRef>) -> Result<HistoryEntry, SessionError> {
        for t in &targets {
            resolve_target(&self.kb.index, t)?;
        }
        let q = QueryExpr {
            targets,
            evidence: self.evidence.clone(),
        };
        let start = Instant::now();
        let result = self.kb.answer(self.backend, &q)?;
        let entry = HistoryEntry {
            query: q.to_string(),
            backend: self.backend,
            result,
            seconds: start.elapsed().as_secs_f64(),
        };
        self.history.push(entry.clone());
        Ok(entry)
    }
}

/// All loaded KBs and open sessions of one process.
#[derive(Default)]
pub struct Workspace {
    kbs: RwLock<HashMap<String, Arc<LoadedKb>>>,
    sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
    next_kb: AtomicU64,
    next_session: AtomicU64,
}

impl Workspace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn load_kb(&self, source: SourceKb) -> Result<Arc<LoadedKb>, SessionError> {
        let id = format!("kb-{}", self.next_kb.fetch_add(1, Ordering::Relaxed) + 1);
        let kb = Arc::new(LoadedKb::load(id.clone(), source)?);
        self.kbs.write().insert(id, kb.clone());
        Ok(kb)
    }

    pub fn kb(&self, id: &str) -> Result<Arc<LoadedKb>, SessionError> {
        self.kbs
            .read()
            .get(id)
            .cloned()
            .ok_or_else(|| SessionError::UnknownKb(id.to_string()))
    }

    pub fn create_session(&self, kb_id: &str, backend: Backend) -> Result<String, SessionError> {
        let kb = self.kb(kb_id)?;
        let id = format!("s-{}", self.next_session.fetch_add(1, Ordering::Relaxed) + 1);
        let session = Session::new(id.clone(), kb, backend);
        self.sessions.write().insert(id.clone(), Arc::new(Mutex::new(session)));
        Ok(id)
    }

    pub fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>, SessionError> {
        self.sessions
            .read()
            .get(id)
            .cloned()
            .ok_or_else(|| SessionError::UnknownSession(id.to_string()))
    }

    pub fn model_graph(&self, kb_id: &str) -> Result<ModelGraph, SessionError> {
        Ok(self.kb(kb_id)?.graph())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GraphNodeKind {
    Class,
    Instance,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GraphNode {
    pub id: String,
    pub kind: GraphNodeKind,
    /// Superclass of a class, or class of an instance.
    pub parent: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GraphEdgeKind {
    /// Complex attribute declared on a class, pointing at its type.
    Complex,
    /// Named filler of a complex attribute of an instance.
    Filler,
    IsA,
    InstanceOf,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GraphEdge {
    pub from: String,
    pub to: String,
    pub kind: GraphEdgeKind,
    pub attribute: Option<String>,
    pub multi: Option<usize>,
    pub inverse: Option<String>,
}

/// Class/instance topology of a KB, sorted for deterministic output.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelGraph {
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<GraphEdge>,
}

pub fn model_graph(index: &KbIndex) -> ModelGraph {
    let kb = index.kb();
    let mut g = ModelGraph::default();
    for class in kb.classes.values() {
        g.nodes.push(GraphNode {
            id: class.name.clone(),
            kind: GraphNodeKind::Class,
            parent: class.superclass.clone(),
        });
        if let Some(sup) = &class.superclass {
            g.edges.push(GraphEdge {
                from: class.name.clone(),
                to: sup.clone(),
                kind: GraphEdgeKind::IsA,
                attribute: None,
                multi: None,
                inverse: None,
            });
        }
        for (name, decl) in &class.attributes {
            if let AttributeDecl::Complex(c) = decl {
                g.edges.push(GraphEdge {
                    from: class.name.clone(),
                    to: c.ty.clone(),
                    kind: GraphEdgeKind::Complex,
                    attribute: Some(name.clone()),
                    multi: match c.cardinality {
                        Cardinality::Multi(n) => Some(n),
                        Cardinality::Single => None,
                    },
                    inverse: c.inverse.clone(),
                });
            }
        }
    }
    for inst in kb.instances.values() {
        g.nodes.push(GraphNode {
            id: inst.name.clone(),
            kind: GraphNodeKind::Instance,
            parent: Some(inst.class.clone()),
        });
        g.edges.push(GraphEdge {
            from: inst.name.clone(),
            to: inst.class.clone(),
            kind: GraphEdgeKind::InstanceOf,
            attribute: None,
            multi: None,
            inverse: None,
        });
        let Some(model) = index.instance_model(&inst.name) else {
            continue;
        };
        for (attr, decl) in &model.attrs {
            if decl.as_complex().is_none() {
                continue;
            }
            let fillers = match index.filler(&inst.name, attr) {
                Some(Filler::One(j)) => vec![j.clone()],
                Some(Filler::Many(js)) => js.clone(),
                None => continue,
            };
            for j in fillers {
                g.edges.push(GraphEdge {
                    from: inst.name.clone(),
                    to: j,
                    kind: GraphEdgeKind::Filler,
                    attribute: Some(attr.clone()),
                    multi: None,
                    inverse: decl.as_complex().and_then(|c| c.inverse.clone()),
                });
            }
        }
    }
    g.nodes.sort();
    g.edges.sort();
    g
}
