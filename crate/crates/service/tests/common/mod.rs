#![allow(dead_code)]

use std::sync::Arc;

use axum::body::{to_bytes, Body};
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use session_intent::classifier::{train, TrainConfig};
use session_intent::context::Transition;
use session_intent::dataset::{DatasetVariant, ExampleMeta, TrainingExample};
use session_intent::embed::{EmbedderConfig, HashEmbedder};
use session_intent::Model;
use session_intent_service::{AppState, ServiceConfig};
use tower::ServiceExt;

pub const DIM: usize = 256;

fn example(input: &str, label: &str) -> TrainingExample {
    TrainingExample {
        input_text: input.to_string(),
        label: label.to_string(),
        meta: ExampleMeta {
            session_id: "fixture".into(),
            query_seq: 0,
            transition: Transition::Identical,
            variant: DatasetVariant::CurPrev,
        },
    }
}

pub fn model() -> Model {
    let rows = [
        ("[CUR] celsius", "Energy Drinks"),
        ("[CUR] celsius energy drink", "Energy Drinks"),
        ("[PREV] celsius [CUR] celsius mix in", "Drink Mixes"),
        ("[CUR] mix in", "Baking Mixes"),
        ("[CUR] pool shock", "Pool Chemicals"),
        ("[CUR] spaghetti noodles", "Pasta"),
        ("[PREV] pasta [CUR] spaghetti noodles", "Pasta"),
    ];
    let examples: Vec<_> = rows.iter().map(|(i, l)| example(i, l)).collect();
    let embedder = HashEmbedder::new(DIM).unwrap();
    let config = TrainConfig { epochs: 200, batch_size: 4, ..TrainConfig::with_seed(3) };
    train(&examples, &embedder, &config).unwrap()
}

pub fn config() -> ServiceConfig {
    ServiceConfig { embedder: EmbedderConfig::hash(DIM), ..ServiceConfig::default() }
}

pub fn state_with(config: ServiceConfig) -> AppState {
    let embedder = Arc::new(HashEmbedder::new(config.embedder.dim).unwrap());
    let state = AppState::new(config, embedder);
    state.set_model(model()).unwrap();
    state
}

pub fn state() -> AppState {
    state_with(config())
}

pub async fn call(app: &Router, method: Method, uri: &str, body: Option<&str>) -> (StatusCode, Vec<u8>) {
    let mut req = Request::builder().method(method).uri(uri);
    if body.is_some() {
        req = req.header("content-type", "application/json");
    }
    let req = req.body(body.map(|b| Body::from(b.to_string())).unwrap_or_else(Body::empty)).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    (status, bytes.to_vec())
}

pub async fn json(app: &Router, method: Method, uri: &str, body: Option<&str>) -> (StatusCode, serde_json::Value) {
    let (status, bytes) = call(app, method, uri, body).await;
    let value = if bytes.is_empty() { serde_json::Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, value)
}

pub fn query_event(q: &str) -> String {
    serde_json::json!({ "type": "query", "query": q }).to_string()
}

pub fn item_event(kind: &str, id: &str, title: &str, pt: &str) -> String {
    serde_json::json!({
        "type": kind,
        "item": { "item_id": id, "title": title, "product_type": pt }
    })
    .to_string()
}
