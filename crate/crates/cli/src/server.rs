//! HTTP transport for the prediction service.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::{DefaultBodyLimit, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::json;
use toneshift_core::serve::{HealthResponse, PredictRequest, PredictResponse, PredictService, ServeError};
use tower_http::cors::CorsLayer;

const MAX_BODY_BYTES: usize = 4 << 20;

pub struct ApiError(ServeError);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match self.0 {
            ServeError::ModelNotLoaded(_) => StatusCode::SERVICE_UNAVAILABLE,
            ServeError::EmptyRequest => StatusCode::UNPROCESSABLE_ENTITY,
            ServeError::Embed(_) | ServeError::Model(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(json!({ "error": self.0.to_string() }))).into_response()
    }
}

async fn predict(State(svc): State<Arc<PredictService>>, Json(req): Json<PredictRequest>) -> Result<Json<PredictResponse>, ApiError> {
    // inference is CPU bound; keep it off the async workers
    tokio::task::spawn_blocking(move || svc.handle_predict(&req))
        .await
        .expect("predict task panicked")
        .map(Json)
        .map_err(ApiError)
}

async fn health(State(svc): State<Arc<PredictService>>) -> Json<HealthResponse> {
    Json(svc.health())
}

pub fn router(svc: Arc<PredictService>) -> Router {
    Router::new()
        .route("/v1/predict", post(predict))
        .route("/v1/health", get(health))
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .layer(CorsLayer::permissive())
        .with_state(svc)
}

pub async fn serve(svc: Arc<PredictService>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(svc))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
