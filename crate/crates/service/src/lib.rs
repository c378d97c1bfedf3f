//! HTTP runtime for session-aware intent prediction.
//!
//! Event posts mutate per-session state and refresh a cached state vector;
//! intent calls read that state, apply the token-match gate and classify.

pub mod config;
pub mod intent;
pub mod store;

use std::future::Future;
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Request, State};
use axum::http::StatusCode;
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use parking_lot::RwLock;
use serde::Deserialize;
use serde_json::json;
use session_intent::classifier::{load_model, ClassifierError};
use session_intent::context::{normalize, PrevQuery};
use session_intent::embed::{Backend, EmbedError, Embedder};
use session_intent::session::{EngagementKind, ItemAttributes};
use session_intent::Model;
use tokio::net::TcpListener;

pub use config::ServiceConfig;
pub use intent::{IntentResponse, PredictError, Predictor, Scored, ServingMode};
pub use store::{SessionStateRecord, SessionStore, StoreConfig};

/// One event as posted to `/v1/sessions/{id}/events`. A client `ts` is
/// accepted but idle time is measured on the server clock.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum SessionEvent {
    Query {
        query: String,
        #[serde(default)]
        ts: Option<i64>,
    },
    Click {
        item: ItemAttributes,
        #[serde(default)]
        ts: Option<i64>,
    },
    Atc {
        item: ItemAttributes,
        #[serde(default)]
        ts: Option<i64>,
    },
    Order {
        item: ItemAttributes,
        #[serde(default)]
        ts: Option<i64>,
    },
}

impl SessionEvent {
    fn text_len(&self) -> usize {
        match self {
            SessionEvent::Query { query, .. } => query.len(),
            SessionEvent::Click { item, .. } | SessionEvent::Atc { item, .. } | SessionEvent::Order { item, .. } => {
                let optional = [&item.brand, &item.gender, &item.size, &item.description];
                item.item_id.len()
                    + item.title.len()
                    + item.product_type.len()
                    + optional.into_iter().flatten().map(String::len).sum::<usize>()
            }
        }
    }

    /// Checks the event on its own, before any session is touched.
    pub fn validate(&self) -> Result<(), ApiError> {
        match self {
            SessionEvent::Query { query, .. } => {
                normalize(query).map_err(|e| ApiError::bad_request(e.to_string()))?;
            }
            SessionEvent::Click { item, .. } | SessionEvent::Atc { item, .. } | SessionEvent::Order { item, .. } => {
                if !item.is_valid() {
                    return Err(ApiError::bad_request("item needs a title and a product_type"));
                }
            }
        }
        Ok(())
    }
}

/// Applies an event to a record without touching version or vector.
pub fn apply_event(record: &mut SessionStateRecord, event: SessionEvent) -> Result<(), ApiError> {
    let (kind, item) = match event {
        SessionEvent::Query { query, .. } => {
            let tokens = normalize(&query).map_err(|e| ApiError::bad_request(e.to_string()))?;
            record.last_query = Some(PrevQuery { raw: query, tokens });
            record.engaged = Default::default();
            return Ok(());
        }
        SessionEvent::Click { item, .. } => (EngagementKind::Click, item),
        SessionEvent::Atc { item, .. } => (EngagementKind::Atc, item),
        SessionEvent::Order { item, .. } => (EngagementKind::Order, item),
    };
    if !item.is_valid() {
        return Err(ApiError::bad_request("item needs a title and a product_type"));
    }
    record.engaged.add(kind, item);
    Ok(())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct IntentRequest {
    query: String,
    #[serde(default)]
    threshold: Option<f64>,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError { status, message: message.into() }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, message)
    }
}

impl From<EmbedError> for ApiError {
    fn from(e: EmbedError) -> Self {
        let status = match e {
            EmbedError::TextTooLong { .. } => StatusCode::PAYLOAD_TOO_LARGE,
            ref e if e.is_retriable() => StatusCode::SERVICE_UNAVAILABLE,
            _ => StatusCode::BAD_GATEWAY,
        };
        ApiError::new(status, e.to_string())
    }
}

impl From<PredictError> for ApiError {
    fn from(e: PredictError) -> Self {
        match e {
            PredictError::Context(e) => ApiError::bad_request(e.to_string()),
            PredictError::Embed(e) => e.into(),
            PredictError::Classifier(ClassifierError::BadThreshold(t)) => {
                ApiError::bad_request(format!("threshold must lie in (0, 1), got {t}"))
            }
            other => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, other.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

type Clock = Arc<dyn Fn() -> i64 + Send + Sync>;

pub fn system_now_ms() -> i64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as i64).unwrap_or(0)
}

struct Inner {
    config: ServiceConfig,
    embedder: Arc<dyn Embedder<f64>>,
    predictor: RwLock<Option<Arc<Predictor>>>,
    store: SessionStore,
    clock: Clock,
}

/// Shared handle to the service: configuration, model, embedder and store.
#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

impl AppState {
    /// Builds the state and restores the snapshot when one is configured.
    /// A missing or unreadable snapshot is logged and the store starts empty.
    pub fn new(config: ServiceConfig, embedder: Arc<dyn Embedder<f64>>) -> Self {
        let store = SessionStore::new(config.store.clone());
        if let Some(path) = &config.store.snapshot_path {
            match store.load_snapshot(path) {
                Ok(n) => tracing::info!(path = %path.display(), sessions = n, "snapshot restored"),
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                    tracing::info!(path = %path.display(), "no snapshot, starting cold")
                }
                Err(e) => tracing::warn!(path = %path.display(), error = %e, "snapshot unreadable, starting cold"),
            }
        }
        AppState {
            inner: Arc::new(Inner {
                config,
                embedder,
                predictor: RwLock::new(None),
                store,
                clock: Arc::new(system_now_ms),
            }),
        }
    }

    /// Replaces the wall clock; for tests of time-dependent behaviour.
    pub fn with_clock(self, clock: impl Fn() -> i64 + Send + Sync + 'static) -> Self {
        let inner = Arc::try_unwrap(self.inner).unwrap_or_else(|_| panic!("with_clock on a shared AppState"));
        AppState { inner: Arc::new(Inner { clock: Arc::new(clock), ..inner }) }
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.inner.config
    }

    pub fn store(&self) -> &SessionStore {
        &self.inner.store
    }

    pub fn now_ms(&self) -> i64 {
        (self.inner.clock)()
    }

    pub fn is_ready(&self) -> bool {
        self.inner.predictor.read().is_some()
    }

    pub fn set_model(&self, model: Model) -> Result<(), PredictError> {
        let predictor = Predictor::new(
            Arc::new(model),
            self.inner.embedder.clone(),
            self.inner.config.mode,
            self.inner.config.context,
        )?;
        *self.inner.predictor.write() = Some(Arc::new(predictor));
        Ok(())
    }

    pub fn load_model(&self, path: &Path) -> Result<(), PredictError> {
        self.set_model(load_model(path)?)
    }

    fn predictor(&self) -> Option<Arc<Predictor>> {
        self.inner.predictor.read().clone()
    }

    /// Runs embedder work off the async workers when the backend blocks on I/O.
    async fn blocking<R: Send + 'static>(&self, f: impl FnOnce() -> R + Send + 'static) -> R {
        if self.inner.config.embedder.backend == Backend::Hash {
            f()
        } else {
            tokio::task::spawn_blocking(f).await.expect("embedding task panicked")
        }
    }

    /// Applies one event under the session's exclusive section; returns the new version.
    pub async fn post_event(&self, id: &str, event: SessionEvent) -> Result<u64, ApiError> {
        if event.text_len() > self.inner.config.max_event_bytes {
            return Err(ApiError::new(
                StatusCode::PAYLOAD_TOO_LARGE,
                format!("event text exceeds {} bytes", self.inner.config.max_event_bytes),
            ));
        }
        event.validate()?;
        let now = self.now_ms();
        loop {
            let entry = self.inner.store.get_or_create(id, now);
            let mut slot = entry.slot().lock().await;
            if entry.is_removed() {
                continue;
            }
            let mut record = slot.record.clone().unwrap_or_else(|| SessionStateRecord::new(id));
            apply_event(&mut record, event)?;
            let context = self.inner.config.context;
            let embedder = self.inner.embedder.clone();
            let (record, vector) = self
                .blocking(move || {
                    let v = intent::state_vector(&record, &context, embedder.as_ref());
                    (record, v)
                })
                .await;
            let mut record = record;
            record.cached_state_vector = vector?;
            record.version += 1;
            record.updated_at = now;
            let version = record.version;
            slot.record = Some(record);
            self.inner.store.touch(&entry, now);
            return Ok(version);
        }
    }

    /// Current record of a session, if it has one.
    pub async fn session(&self, id: &str) -> Option<SessionStateRecord> {
        let entry = self.inner.store.get(id)?;
        let slot = entry.slot().lock().await;
        if entry.is_removed() {
            return None;
        }
        slot.record.clone()
    }

    pub async fn intent(&self, id: &str, query: String, threshold: Option<f64>) -> Result<IntentResponse, ApiError> {
        let predictor =
            self.predictor().ok_or_else(|| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "model not loaded"))?;
        let record = self.session(id).await;
        if record.is_none() && self.inner.config.require_session {
            return Err(ApiError::new(StatusCode::NOT_FOUND, format!("unknown session {id:?}")));
        }
        let threshold = threshold.unwrap_or(self.inner.config.default_threshold);
        let response = self.blocking(move || predictor.predict(record.as_ref(), &query, threshold)).await?;
        Ok(response)
    }

    /// Stateless prediction, as for a request without session state.
    pub async fn stateless_intent(&self, query: String, threshold: Option<f64>) -> Result<IntentResponse, ApiError> {
        let predictor =
            self.predictor().ok_or_else(|| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "model not loaded"))?;
        let threshold = threshold.unwrap_or(self.inner.config.default_threshold);
        Ok(self.blocking(move || predictor.predict(None, &query, threshold)).await?)
    }

    pub fn delete(&self, id: &str) -> bool {
        self.inner.store.remove(id)
    }

    pub fn sweep(&self) -> usize {
        self.inner.store.sweep(self.now_ms())
    }

    pub async fn save_snapshot(&self) -> Option<std::io::Result<usize>> {
        let path = self.inner.config.store.snapshot_path.clone()?;
        Some(self.inner.store.save_snapshot(&path).await)
    }
}

async fn post_event(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> Result<Json<serde_json::Value>, ApiError> {
    let event: SessionEvent = serde_json::from_slice(&body).map_err(|e| ApiError::bad_request(e.to_string()))?;
    let version = state.post_event(&id, event).await?;
    Ok(Json(json!({ "version": version })))
}

async fn post_intent(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> Result<Json<IntentResponse>, ApiError> {
    let req: IntentRequest = serde_json::from_slice(&body).map_err(|e| ApiError::bad_request(e.to_string()))?;
    Ok(Json(state.intent(&id, req.query, req.threshold).await?))
}

async fn post_stateless_intent(State(state): State<AppState>, body: Bytes) -> Result<Json<IntentResponse>, ApiError> {
    let req: IntentRequest = serde_json::from_slice(&body).map_err(|e| ApiError::bad_request(e.to_string()))?;
    Ok(Json(state.stateless_intent(req.query, req.threshold).await?))
}

async fn delete_session(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> StatusCode {
    state.delete(&id);
    StatusCode::NO_CONTENT
}

async fn get_session(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
) -> Result<Json<SessionStateRecord>, ApiError> {
    state
        .session(&id)
        .await
        .map(Json)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("unknown session {id:?}")))
}

async fn healthz(State(state): State<AppState>) -> Json<serde_json::Value> {
    Json(json!({ "ready": state.is_ready(), "sessions": state.store().len() }))
}

async fn access_log(req: Request, next: Next) -> Response {
    let started = Instant::now();
    let method = req.method().to_string();
    let path = req.uri().path().to_string();
    let response = next.run(req).await;
    let line = json!({
        "method": method,
        "path": path,
        "status": response.status().as_u16(),
        "latency_us": started.elapsed().as_micros() as u64,
    });
    tracing::info!(target: "access", "{line}");
    response
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/v1/healthz", get(healthz))
        .route("/v1/intent", post(post_stateless_intent))
        .route("/v1/sessions/{id}", get(get_session).delete(delete_session))
        .route("/v1/sessions/{id}/events", post(post_event))
        .route("/v1/sessions/{id}/intent", post(post_intent))
        .layer(middleware::from_fn(access_log))
        .with_state(state)
}

/// Serves until `shutdown` resolves, sweeping idle sessions in the background
/// and writing the snapshot on the way out.
pub async fn serve(
    state: AppState,
    listener: TcpListener,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let sweeper = {
        let state = state.clone();
        let every = Duration::from_millis(state.config().sweep_interval_ms);
        tokio::spawn(async move {
            let mut tick = tokio::time::interval(every);
            tick.tick().await;
            loop {
                tick.tick().await;
                let n = state.sweep();
                if n > 0 {
                    tracing::info!(evicted = n, "ttl sweep");
                }
            }
        })
    };
    let result = axum::serve(listener, router(state.clone())).with_graceful_shutdown(shutdown).await;
    sweeper.abort();
    match state.save_snapshot().await {
        Some(Ok(n)) => tracing::info!(sessions = n, "snapshot written"),
        Some(Err(e)) => tracing::error!(error = %e, "snapshot write failed"),
        None => {}
    }
    result
}
