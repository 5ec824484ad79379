//! HTTP front end for the router.
//!
//! | method | path | |
//! |---|---|---|
//! | POST | `/v1/route` | route pre-extracted tags or raw text |
//! | GET | `/v1/models` | registry and per-model element counts |
//! | POST | `/v1/models/{id}/records` | stage evaluation records (admin) |
//! | POST | `/v1/index/rebuild` | index staged models and swap (admin) |
//! | GET | `/v1/index/stats` | version, counts and OTHER share |
//! | GET | `/healthz` | liveness |
//!
//! Every request reads one snapshot; rebuilds replace it atomically.

mod api;
mod state;

use std::future::Future;
use std::sync::Arc;
use std::time::Instant;

use axum::extract::Request;
use axum::middleware::{self, Next};
use axum::response::Response;
use axum::routing::{get, post};
use axum::Router;
use tokio::net::TcpListener;

pub use api::{resolve_pool, ApiError, ModelView, ModelsResponse, RouteRequest, RouteResponse, ScoreView};
pub use state::{AppState, GatewayConfig, ModelEntry, Registry, Snapshot};

async fn log_request(req: Request, next: Next) -> Response {
    let method = req.method().clone();
    let path = req.uri().path().to_string();
    let start = Instant::now();
    let resp = next.run(req).await;
    tracing::info!(
        %method,
        %path,
        status = resp.status().as_u16(),
        micros = start.elapsed().as_micros() as u64,
        "request"
    );
    resp
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/v1/route", post(api::route_handler))
        .route("/v1/models", get(api::models_handler))
        .route("/v1/models/{id}/records", post(api::upload_records_handler))
        .route("/v1/index/rebuild", post(api::rebuild_handler))
        .route("/v1/index/stats", get(api::stats_handler))
        .route("/healthz", get(api::health_handler))
        .layer(middleware::from_fn(log_request))
        .with_state(state)
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: TcpListener,
    state: Arc<AppState>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await
}
