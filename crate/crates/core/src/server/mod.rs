//! HTTP API under `/v1`, plus the per-session event log.
//!
//! | method | path | result |
//! |---|---|---|
//! | POST | `/v1/sessions` | agent config in, `201 {session_id}` out |
//! | GET | `/v1/sessions` | `{sessions: [id]}` |
//! | POST | `/v1/sessions/{id}/turns` | `{utterance, cues, day}` in, TurnResult out |
//! | POST | `/v1/sessions/{id}/end-day` | DayReport |
//! | GET | `/v1/sessions/{id}/memory` | `{episodic, semantic}` |
//! | GET | `/v1/sessions/{id}/state` | `{emotion, clock, profile, ...}` |
//! | GET | `/v1/health` | `{status}` |
//!
//! Errors are `{error, message, field?}` with 400 (bad body or config), 404
//! (unknown session or space), 409 (a request is already running for the
//! session) and 502 (backend failure; the turn is rolled back).

mod api;
pub mod eventlog;

use std::net::SocketAddr;

pub use api::{router, ApiError, AppState, BackendFactory, BackendOverride, ServerOptions};

/// Bind, resume any persisted sessions and serve until ctrl-c. Prints
/// `listening on ADDR` once the socket is bound.
pub async fn serve(addr: SocketAddr, opts: ServerOptions) -> std::io::Result<()> {
    let state = AppState::resume(opts).map_err(std::io::Error::other)?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    println!("listening on {}", listener.local_addr()?);
    use std::io::Write;
    std::io::stdout().flush()?;
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
