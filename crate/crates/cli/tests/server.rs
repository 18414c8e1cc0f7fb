use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use toneshift_cli::server::router;
use toneshift_core::embed::HashEmbedder;
use toneshift_core::regressor::{ModelConfig, ModelParams};
use toneshift_core::serve::PredictService;
use toneshift_core::tone::VaderTone;
use tower::ServiceExt;

fn service(loaded: bool) -> Arc<PredictService> {
    let svc = PredictService::new(Arc::new(VaderTone::default()), Arc::new(HashEmbedder::new(0)), None);
    Arc::new(if loaded {
        svc.with_model(ModelParams::init(ModelConfig::best(), 5).unwrap(), "test-model")
    } else {
        svc
    })
}

async fn call(svc: Arc<PredictService>, req: Request<Body>) -> (StatusCode, Value) {
    let resp = router(svc).oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

fn post(body: Value) -> Request<Body> {
    Request::post("/v1/predict")
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap()
}

fn thread() -> Value {
    json!({
        "messages": [
            {"text": "I have been feeling really low lately.", "author": "op", "created_utc": 1},
            {"text": "Hang in there, you are not alone!", "author": "helper", "created_utc": 2},
            {"text": "Thanks, that means a lot.", "author": "op", "created_utc": 3}
        ],
        "post_author": "op",
        "draft": {"text": "Proud of you for reaching out."}
    })
}

#[tokio::test]
async fn health_reports_degraded_then_ok() {
    let (status, body) = call(service(false), Request::get("/v1/health").body(Body::empty()).unwrap()).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["status"], "degraded");
    assert!(body["model_id"].is_null());
    assert_eq!(body["lexicon_sha256"].as_str().unwrap().len(), 64);

    let (_, body) = call(service(true), Request::get("/v1/health").body(Body::empty()).unwrap()).await;
    assert_eq!(body["status"], "ok");
    assert_eq!(body["model_id"], "test-model");
    assert_eq!(body["provider_id"], "hash-v1-seed0");
    assert!(body["uptime_s"].as_f64().unwrap() >= 0.0);
}

#[tokio::test]
async fn predict_schema() {
    let svc = service(true);
    let (status, body) = call(svc.clone(), post(thread())).await;
    assert_eq!(status, StatusCode::OK);
    let mut keys: Vec<&str> = body.as_object().unwrap().keys().map(String::as_str).collect();
    keys.sort_unstable();
    assert_eq!(keys, ["latency_ms", "model_id", "per_message_emt", "predicted_emt", "truncated"]);
    assert_eq!(body["per_message_emt"].as_array().unwrap().len(), 4);
    let y = body["predicted_emt"].as_f64().unwrap();
    assert!((-1.0..=1.0).contains(&y));

    let (_, again) = call(svc, post(thread())).await;
    assert_eq!(again["predicted_emt"], body["predicted_emt"]);
}

#[tokio::test]
async fn predict_errors() {
    let (status, body) = call(service(false), post(thread())).await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
    assert!(body["error"].as_str().unwrap().contains("no model"));

    let empty = json!({"messages": [], "post_author": "op"});
    let (status, _) = call(service(true), post(empty)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);

    let (status, _) = call(service(true), post(json!({"post_author": "op"}))).await;
    assert!(status.is_client_error());
}
