//! HTTP/JSON endpoints and a line-oriented REPL over one shared
//! [`Workspace`] of loaded knowledge bases and evidence sessions.

mod api;
mod repl;

pub use api::{
    router, ErrorBody, EvidenceResponse, KbResponse, LoadKbRequest, NewSessionRequest, ObserveRequest,
    PosteriorResponse, QueryRequest, RetractRequest, SessionResponse, TargetPosterior,
};
pub use repl::{render, Repl, Step};
pub use spook::session::Workspace;

/// Serves [`router`] on `addr` until the process is stopped.
pub async fn serve(ws: std::sync::Arc<Workspace>, addr: std::net::SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(ws)).await
}
