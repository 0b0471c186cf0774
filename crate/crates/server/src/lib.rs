//! HTTP transport for the session protocol.
//!
//! * `POST /v1/messages`: body is a protocol request, response body the reply.
//!   Protocol failures are `error` replies with status 200.
//! * `GET /v1/health`: `ok`.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response as HttpResponse};
use axum::routing::{get, post};
use axum::Router;
use kiai_core::scalar::Scalar;
use kiai_core::session::Service;

pub fn router<T: Scalar>(service: Arc<Service<T>>) -> Router {
    Router::new()
        .route("/v1/messages", post(messages::<T>))
        .route("/v1/health", get(|| async { "ok" }))
        .with_state(service)
}

async fn messages<T: Scalar>(State(service): State<Arc<Service<T>>>, body: String) -> HttpResponse {
    // retraining can take seconds; keep it off the async workers
    let reply = tokio::task::spawn_blocking(move || service.handle_json(&body)).await;
    match reply {
        Ok(json) => ([(header::CONTENT_TYPE, "application/json")], json).into_response(),
        Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, e.to_string()).into_response(),
    }
}

/// Serves until ctrl-c.
pub async fn serve<T: Scalar>(addr: SocketAddr, service: Arc<Service<T>>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(service))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
