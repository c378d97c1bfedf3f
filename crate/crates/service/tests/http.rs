mod common;

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicI64, Ordering};
use std::sync::Arc;

use axum::http::{Method, StatusCode};
use common::*;
use session_intent::context::EngagementKinds;
use session_intent::embed::{CombineMode, Embedder, HashEmbedder};
use session_intent_service::{router, AppState, ServiceConfig, ServingMode, SessionStateRecord, StoreConfig};

fn embed(text: &str) -> Vec<f64> {
    HashEmbedder::new(DIM).unwrap().embed(text).unwrap().into_vec()
}

async fn dump(app: &axum::Router, id: &str) -> SessionStateRecord {
    let (status, body) = call(app, Method::GET, &format!("/v1/sessions/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    serde_json::from_slice(&body).unwrap()
}

#[tokio::test]
async fn first_query_creates_record_with_prev_vector() {
    let app = router(state());
    let (status, body) = json(&app, Method::POST, "/v1/sessions/s1/events", Some(&query_event("celsius"))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, serde_json::json!({ "version": 1 }));
    let record = dump(&app, "s1").await;
    assert_eq!(record.version, 1);
    assert_eq!(record.cached_state_vector.unwrap().into_vec(), embed("[PREV] celsius"));
}

#[tokio::test]
async fn engagement_bumps_version_and_extends_state() {
    let mut config = config();
    config.context.engagement_kinds = EngagementKinds::Atc;
    let app = router(state_with(config));
    json(&app, Method::POST, "/v1/sessions/s1/events", Some(&query_event("celsius"))).await;
    let atc = item_event("atc", "i1", "Celsius Sparkling Orange", "Energy Drinks");
    let (status, body) = json(&app, Method::POST, "/v1/sessions/s1/events", Some(&atc)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["version"], 2);
    let record = dump(&app, "s1").await;
    assert_eq!(record.engaged.atc.len(), 1);
    assert_eq!(record.cached_state_vector.unwrap().into_vec(), embed("[PREV] celsius [ATC] celsius sparkling orange"));
}

#[tokio::test]
async fn a_new_query_clears_engagements() {
    let app = router(state());
    json(&app, Method::POST, "/v1/sessions/s1/events", Some(&query_event("celsius"))).await;
    json(&app, Method::POST, "/v1/sessions/s1/events", Some(&item_event("click", "i1", "Can", "Energy Drinks"))).await;
    json(&app, Method::POST, "/v1/sessions/s1/events", Some(&query_event("pool shock"))).await;
    let record = dump(&app, "s1").await;
    assert_eq!(record.version, 3);
    assert!(record.engaged.click.is_empty());
    assert_eq!(record.last_query.unwrap().raw, "pool shock");
}

#[tokio::test]
async fn malformed_events_are_rejected() {
    let app = router(state());
    let wish = item_event("wish", "i1", "Can", "Energy Drinks");
    for body in [wish.as_str(), "{not json", r#"{"type":"query","query":"  !! "}"#, r#"{"type":"atc"}"#] {
        let (status, _) = call(&app, Method::POST, "/v1/sessions/s1/events", Some(body)).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{body}");
    }
    let (status, _) = call(&app, Method::GET, "/v1/sessions/s1", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn oversized_item_text_is_413() {
    let app = router(state());
    let title = "x".repeat(20_000);
    let body = item_event("click", "i1", &title, "Energy Drinks");
    let (status, _) = call(&app, Method::POST, "/v1/sessions/s1/events", Some(&body)).await;
    assert_eq!(status, StatusCode::PAYLOAD_TOO_LARGE);
}

#[tokio::test]
async fn matching_stored_query_gates_the_context_path() {
    let app = router(state());
    json(&app, Method::POST, "/v1/sessions/s1/events", Some(&query_event("celsius"))).await;
    let (status, body) =
        json(&app, Method::POST, "/v1/sessions/s1/intent", Some(r#"{"query":"celsius mix in"}"#)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["gated"], true);
    assert_eq!(body["version"], 1);
    assert_eq!(body["input"], "[PREV] celsius [CUR] celsius mix in");
    assert_eq!(body["top"]["pt"], "Drink Mixes");
}

#[tokio::test]
async fn gate_failure_is_byte_identical_to_stateless() {
    let app = router(state());
    json(&app, Method::POST, "/v1/sessions/s1/events", Some(&query_event("pool shock"))).await;
    let req = r#"{"query":"spaghetti noodles"}"#;
    let (_, gated_off) = call(&app, Method::POST, "/v1/sessions/s1/intent", Some(req)).await;
    let (_, stateless) = call(&app, Method::POST, "/v1/intent", Some(req)).await;
    let (_, unknown) = call(&app, Method::POST, "/v1/sessions/nobody/intent", Some(req)).await;
    assert_eq!(gated_off, stateless);
    assert_eq!(unknown, stateless);
    let v: serde_json::Value = serde_json::from_slice(&stateless).unwrap();
    assert_eq!(v["gated"], false);
    assert_eq!(v["input"], "[CUR] spaghetti noodles");
    assert!(v.get("version").is_none());
}

#[tokio::test]
async fn intent_does_not_mutate_state() {
    let app = router(state());
    json(&app, Method::POST, "/v1/sessions/s1/events", Some(&query_event("celsius"))).await;
    let before = dump(&app, "s1").await;
    for q in ["celsius mix in", "pool shock"] {
        let body = serde_json::json!({ "query": q }).to_string();
        json(&app, Method::POST, "/v1/sessions/s1/intent", Some(&body)).await;
    }
    assert_eq!(dump(&app, "s1").await, before);
}

#[tokio::test]
async fn read_your_writes() {
    let mut config = config();
    config.context.engagement_kinds = EngagementKinds::Atc;
    let app = router(state_with(config));
    json(&app, Method::POST, "/v1/sessions/s1/events", Some(&query_event("celsius"))).await;
    let atc = item_event("atc", "i1", "Celsius Peach Vibe", "Energy Drinks");
    json(&app, Method::POST, "/v1/sessions/s1/events", Some(&atc)).await;
    let (_, body) = json(&app, Method::POST, "/v1/sessions/s1/intent", Some(r#"{"query":"celsius mix in"}"#)).await;
    assert_eq!(body["version"], 2);
    assert_eq!(body["input"], "[PREV] celsius [ATC] celsius peach vibe [CUR] celsius mix in");
}

#[tokio::test]
async fn threshold_controls_the_set() {
    let app = router(state());
    let (_, wide) = json(&app, Method::POST, "/v1/intent", Some(r#"{"query":"celsius","threshold":0.01}"#)).await;
    let (_, narrow) = json(&app, Method::POST, "/v1/intent", Some(r#"{"query":"celsius","threshold":0.9}"#)).await;
    assert!(wide["set"].as_array().unwrap().len() >= narrow["set"].as_array().unwrap().len());
    let (status, _) = call(&app, Method::POST, "/v1/intent", Some(r#"{"query":"celsius","threshold":1.5}"#)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = call(&app, Method::POST, "/v1/intent", Some(r#"{"query":""}"#)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn require_session_gives_404() {
    let app = router(state_with(ServiceConfig { require_session: true, ..config() }));
    let (status, _) = call(&app, Method::POST, "/v1/sessions/nobody/intent", Some(r#"{"query":"celsius"}"#)).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn no_model_means_not_ready() {
    let state = AppState::new(config(), Arc::new(HashEmbedder::new(DIM).unwrap()));
    let app = router(state.clone());
    let (status, body) = json(&app, Method::GET, "/v1/healthz", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["ready"], false);
    let (status, _) = call(&app, Method::POST, "/v1/sessions/s1/intent", Some(r#"{"query":"celsius"}"#)).await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
    state.set_model(model()).unwrap();
    let (_, body) = json(&app, Method::GET, "/v1/healthz", None).await;
    assert_eq!(body["ready"], true);
}

#[tokio::test]
async fn delete_is_idempotent_and_restores_stateless_behaviour() {
    let app = router(state());
    json(&app, Method::POST, "/v1/sessions/s1/events", Some(&query_event("celsius"))).await;
    for _ in 0..2 {
        let (status, body) = call(&app, Method::DELETE, "/v1/sessions/s1", None).await;
        assert_eq!(status, StatusCode::NO_CONTENT);
        assert!(body.is_empty());
    }
    let req = r#"{"query":"celsius mix in"}"#;
    let (_, after) = call(&app, Method::POST, "/v1/sessions/s1/intent", Some(req)).await;
    let (_, stateless) = call(&app, Method::POST, "/v1/intent", Some(req)).await;
    assert_eq!(after, stateless);
}

#[tokio::test]
async fn idle_records_are_swept() {
    let clock = Arc::new(AtomicI64::new(0));
    let c = clock.clone();
    let config = ServiceConfig { store: StoreConfig { ttl_ms: 1_000, ..StoreConfig::default() }, ..config() };
    let state =
        AppState::new(config, Arc::new(HashEmbedder::new(DIM).unwrap())).with_clock(move || c.load(Ordering::SeqCst));
    state.set_model(model()).unwrap();
    let app = router(state.clone());
    json(&app, Method::POST, "/v1/sessions/old/events", Some(&query_event("celsius"))).await;
    clock.store(900, Ordering::SeqCst);
    json(&app, Method::POST, "/v1/sessions/fresh/events", Some(&query_event("celsius"))).await;
    clock.store(1_500, Ordering::SeqCst);
    assert_eq!(state.sweep(), 1);
    let (status, _) = call(&app, Method::GET, "/v1/sessions/old", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(dump(&app, "fresh").await.version, 1);
}

#[tokio::test]
async fn lru_bound_evicts_first_session() {
    let config = ServiceConfig { store: StoreConfig { max_sessions: 1, ..StoreConfig::default() }, ..config() };
    let app = router(state_with(config));
    json(&app, Method::POST, "/v1/sessions/a/events", Some(&query_event("celsius"))).await;
    json(&app, Method::POST, "/v1/sessions/b/events", Some(&query_event("pool shock"))).await;
    let (status, _) = call(&app, Method::GET, "/v1/sessions/a", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(dump(&app, "b").await.version, 1);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 8)]
async fn concurrent_events_get_gap_free_versions() {
    let app = router(state());
    let mut handles = Vec::new();
    for i in 0..100 {
        let app = app.clone();
        handles.push(tokio::spawn(async move {
            let body = if i % 3 == 0 {
                query_event(&format!("celsius flavor {i}"))
            } else {
                item_event("click", &format!("i{i}"), "Celsius Can", "Energy Drinks")
            };
            let (status, v) = json(&app, Method::POST, "/v1/sessions/hot/events", Some(&body)).await;
            assert_eq!(status, StatusCode::OK);
            v["version"].as_u64().unwrap()
        }));
    }
    let mut versions = Vec::new();
    for h in handles {
        versions.push(h.await.unwrap());
    }
    let seen: BTreeSet<u64> = versions.iter().copied().collect();
    assert_eq!(seen.len(), 100);
    assert_eq!(seen, (1..=100).collect());
    assert_eq!(dump(&app, "hot").await.version, 100);
}

#[tokio::test]
async fn vector_mode_combines_cached_state() {
    let config = ServiceConfig { mode: ServingMode::Vector(CombineMode::Sum), ..config() };
    let app = router(state_with(config));
    json(&app, Method::POST, "/v1/sessions/s1/events", Some(&query_event("celsius"))).await;
    let (status, body) =
        json(&app, Method::POST, "/v1/sessions/s1/intent", Some(r#"{"query":"celsius mix in"}"#)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["gated"], true);

    let concat = ServiceConfig { mode: ServingMode::Vector(CombineMode::Concat), ..common::config() };
    let state = AppState::new(concat, Arc::new(HashEmbedder::new(DIM).unwrap()));
    assert!(state.set_model(model()).is_err());
}

#[tokio::test]
async fn snapshot_round_trip_preserves_dumps() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sessions.jsonl");
    let config = ServiceConfig {
        store: StoreConfig { snapshot_path: Some(path.clone()), ..StoreConfig::default() },
        ..config()
    };
    let first = state_with(config.clone());
    assert!(first.store().is_empty());
    let app = router(first.clone());
    json(&app, Method::POST, "/v1/sessions/a/events", Some(&query_event("celsius"))).await;
    json(&app, Method::POST, "/v1/sessions/a/events", Some(&item_event("atc", "i1", "Can", "Energy Drinks"))).await;
    json(&app, Method::POST, "/v1/sessions/b/events", Some(&query_event("pool shock"))).await;
    let before = (dump(&app, "a").await, dump(&app, "b").await);
    assert_eq!(first.save_snapshot().await.unwrap().unwrap(), 2);

    let second = state_with(config);
    let app = router(second);
    assert_eq!((dump(&app, "a").await, dump(&app, "b").await), before);
    let (_, v) = json(&app, Method::POST, "/v1/sessions/a/events", Some(&query_event("celsius mix in"))).await;
    assert_eq!(v["version"], 3);
}

#[tokio::test]
async fn missing_or_corrupt_snapshot_starts_cold() {
    let dir = tempfile::tempdir().unwrap();
    for (name, contents) in [("missing.jsonl", None), ("corrupt.jsonl", Some("{oops\n"))] {
        let path = dir.path().join(name);
        if let Some(c) = contents {
            std::fs::write(&path, c).unwrap();
        }
        let config =
            ServiceConfig { store: StoreConfig { snapshot_path: Some(path), ..StoreConfig::default() }, ..config() };
        let state = state_with(config);
        assert!(state.store().is_empty());
        assert!(state.is_ready());
    }
}

#[tokio::test]
async fn serves_over_tcp_and_writes_snapshot_on_shutdown() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("snap.jsonl");
    let config = ServiceConfig {
        store: StoreConfig { snapshot_path: Some(path.clone()), ..StoreConfig::default() },
        ..config()
    };
    let state = state_with(config);
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    let server = tokio::spawn(session_intent_service::serve(state, listener, async {
        rx.await.ok();
    }));

    let mut stream = tokio::net::TcpStream::connect(addr).await.unwrap();
    let body = query_event("celsius");
    let request = format!(
        "POST /v1/sessions/tcp/events HTTP/1.1\r\nhost: x\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
        body.len()
    );
    use tokio::io::{AsyncReadExt, AsyncWriteExt};
    stream.write_all(request.as_bytes()).await.unwrap();
    let mut response = String::new();
    stream.read_to_string(&mut response).await.unwrap();
    assert!(response.starts_with("HTTP/1.1 200"), "{response}");
    assert!(response.ends_with(r#"{"version":1}"#), "{response}");

    tx.send(()).unwrap();
    server.await.unwrap().unwrap();
    let snapshot = std::fs::read_to_string(&path).unwrap();
    assert_eq!(snapshot.lines().count(), 1);
    assert!(snapshot.contains(r#""session_id":"tcp""#));
}
