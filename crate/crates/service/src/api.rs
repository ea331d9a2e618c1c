use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use spook::lang::SourceKb;
use spook::query::{ChainRef, Observation};
use spook::session::{Backend, HistoryEntry, ModelGraph, SessionError, Workspace};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub location: Option<String>,
}

#[derive(Debug)]
enum ApiError {
    Session(SessionError),
    BadRequest { code: &'static str, message: String },
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        ApiError::Session(e)
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError::BadRequest {
            code: "bad-request",
            message: e.body_text(),
        }
    }
}

fn status_of(code: &str) -> StatusCode {
    match code {
        "unknown-kb" | "unknown-session" | "not-observed" => StatusCode::NOT_FOUND,
        "contradictory-evidence" => StatusCode::CONFLICT,
        "bad-request" | "bad-target" | "syntax-error" | "invalid-kb" | "bad-value" | "unknown-instance"
        | "non-simple-chain" | "model-error" => StatusCode::BAD_REQUEST,
        _ => StatusCode::UNPROCESSABLE_ENTITY,
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = match self {
            ApiError::Session(e) => ErrorBody {
                code: e.code().to_string(),
                message: e.to_string(),
                location: e.location(),
            },
            ApiError::BadRequest { code, message } => ErrorBody {
                code: code.to_string(),
                message,
                location: None,
            },
        };
        (status_of(&body.code), Json(body)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

fn target(text: &str) -> Result<ChainRef, ApiError> {
    ChainRef::parse(text).ok_or_else(|| ApiError::BadRequest {
        code: "bad-target",
        message: format!("`{text}` is not of the form instance.attribute[.attribute...]"),
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LoadKbRequest {
    pub source: String,
    /// Shown in diagnostics; defaults to `request.spook`.
    #[serde(default)]
    pub name: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KbResponse {
    pub id: String,
    pub classes: usize,
    pub instances: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NewSessionRequest {
    pub kb: String,
    #[serde(default)]
    pub backend: Backend,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionResponse {
    pub id: String,
    pub kb: String,
    pub backend: Backend,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ObserveRequest {
    pub target: String,
    pub value: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RetractRequest {
    pub target: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvidenceItem {
    pub target: String,
    pub value: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvidenceResponse {
    pub session: String,
    pub evidence: Vec<EvidenceItem>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QueryRequest {
    pub targets: Vec<String>,
}

/// Marginal of one query target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetPosterior {
    pub target: String,
    pub values: Vec<String>,
    pub probabilities: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorResponse {
    pub query: String,
    pub backend: Backend,
    pub seconds: f64,
    pub targets: Vec<TargetPosterior>,
    /// Joint over all targets, first target most significant.
    pub joint: Vec<f64>,
}

impl From<&HistoryEntry> for PosteriorResponse {
    fn from(h: &HistoryEntry) -> Self {
        let targets = h
            .result
            .targets
            .iter()
            .enumerate()
            .map(|(i, t)| TargetPosterior {
                target: t.to_string(),
                values: h.result.ranges[i].clone(),
                probabilities: h.result.marginal(i),
            })
            .collect();
        Self {
            query: h.query.clone(),
            backend: h.backend,
            seconds: h.seconds,
            targets,
            joint: h.result.joint.clone(),
        }
    }
}

fn evidence(session: &str, obs: &[Observation]) -> EvidenceResponse {
    EvidenceResponse {
        session: session.to_string(),
        evidence: obs
            .iter()
            .map(|o| EvidenceItem {
                target: o.target.to_string(),
                value: o.value.clone(),
            })
            .collect(),
    }
}

/// All endpoints over `ws`.
pub fn router(ws: Arc<Workspace>) -> Router {
    Router::new()
        .route("/kb", post(load_kb))
        .route("/kb/{id}/graph", get(graph))
        .route("/session", post(create_session))
        .route("/session/{id}/observe", post(observe).delete(retract))
        .route("/session/{id}/query", post(query))
        .route("/session/{id}/history", get(history))
        .with_state(ws)
}

async fn load_kb(
    State(ws): State<Arc<Workspace>>,
    body: Result<Json<LoadKbRequest>, JsonRejection>,
) -> ApiResult<KbResponse> {
    let Json(req) = body?;
    let name = req.name.unwrap_or_else(|| "request.spook".to_string());
    let kb = tokio::task::spawn_blocking(move || ws.load_kb(SourceKb::new(req.source, name)))
        .await
        .expect("load task")?;
    let parsed = kb.index.kb();
    Ok(Json(KbResponse {
        id: kb.id.clone(),
        classes: parsed.classes.len(),
        instances: parsed.instances.len(),
    }))
}

async fn graph(State(ws): State<Arc<Workspace>>, Path(id): Path<String>) -> ApiResult<ModelGraph> {
    Ok(Json(ws.model_graph(&id)?))
}

async fn create_session(
    State(ws): State<Arc<Workspace>>,
    body: Result<Json<NewSessionRequest>, JsonRejection>,
) -> ApiResult<SessionResponse> {
    let Json(req) = body?;
    let id = ws.create_session(&req.kb, req.backend)?;
    Ok(Json(SessionResponse {
        id,
        kb: req.kb,
        backend: req.backend,
    }))
}

async fn observe(
    State(ws): State<Arc<Workspace>>,
    Path(id): Path<String>,
    body: Result<Json<ObserveRequest>, JsonRejection>,
) -> ApiResult<EvidenceResponse> {
    let Json(req) = body?;
    let t = target(&req.target)?;
    let session = ws.session(&id)?;
    let mut s = session.lock();
    let ev = s.observe(t, req.value)?;
    Ok(Json(evidence(&id, ev)))
}

async fn retract(
    State(ws): State<Arc<Workspace>>,
    Path(id): Path<String>,
    body: Result<Json<RetractRequest>, JsonRejection>,
) -> ApiResult<EvidenceResponse> {
    let Json(req) = body?;
    let t = target(&req.target)?;
    let session = ws.session(&id)?;
    let mut s = session.lock();
    let ev = s.retract(&t)?;
    Ok(Json(evidence(&id, ev)))
}

async fn query(
    State(ws): State<Arc<Workspace>>,
    Path(id): Path<String>,
    body: Result<Json<QueryRequest>, JsonRejection>,
) -> ApiResult<PosteriorResponse> {
    let Json(req) = body?;
    if req.targets.is_empty() {
        return Err(ApiError::BadRequest {
            code: "bad-request",
            message: "at least one target is required".into(),
        });
    }
    let targets = req.targets.iter().map(|t| target(t)).collect::<Result<Vec<_>, _>>()?;
    let session = ws.session(&id)?;
    // inference is CPU-bound; keep it off the async workers
    let entry = tokio::task::spawn_blocking(move || session.lock().query(targets))
        .await
        .expect("query task")?;
    Ok(Json(PosteriorResponse::from(&entry)))
}

async fn history(State(ws): State<Arc<Workspace>>, Path(id): Path<String>) -> ApiResult<Vec<PosteriorResponse>> {
    let session = ws.session(&id)?;
    let s = session.lock();
    Ok(Json(s.history().iter().map(PosteriorResponse::from).collect()))
}
