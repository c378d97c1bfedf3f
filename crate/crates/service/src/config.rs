use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use session_intent::context::ContextConfig;
use session_intent::embed::{Backend, EmbedderConfig};
use thiserror::Error;

use crate::intent::{ServingMode, DEFAULT_THRESHOLD};
use crate::store::StoreConfig;

pub const DEFAULT_BIND: &str = "127.0.0.1:7878";

#[derive(Debug, Error)]
#[error("invalid value for {var}: {message}")]
pub struct ConfigError {
    pub var: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub bind: String,
    pub model_path: Option<PathBuf>,
    pub embedder: EmbedderConfig,
    pub store: StoreConfig,
    pub mode: ServingMode,
    pub context: ContextConfig,
    /// Answer 404 for intent calls on unknown sessions instead of falling back.
    pub require_session: bool,
    pub default_threshold: f64,
    /// Upper bound on the combined text of an event (query or item fields).
    pub max_event_bytes: usize,
    pub sweep_interval_ms: u64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            bind: DEFAULT_BIND.to_string(),
            model_path: None,
            embedder: EmbedderConfig::default(),
            store: StoreConfig::default(),
            mode: ServingMode::Joint,
            context: ContextConfig::default(),
            require_session: false,
            default_threshold: DEFAULT_THRESHOLD,
            max_event_bytes: 16 * 1024,
            sweep_interval_ms: 60_000,
        }
    }
}

fn parse<T: std::str::FromStr>(var: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError { var: var.to_string(), message: e.to_string() })
}

impl ServiceConfig {
    /// Defaults overridden by `SESSION_INTENT_*` variables from `lookup`.
    pub fn from_lookup(lookup: impl Fn(&str) -> Option<String>) -> Result<Self, ConfigError> {
        let mut c = ServiceConfig::default();
        let get = |name: &str| lookup(name).map(|v| (name.to_string(), v));
        if let Some((_, v)) = get("SESSION_INTENT_BIND") {
            c.bind = v;
        }
        if let Some((_, v)) = get("SESSION_INTENT_MODEL") {
            c.model_path = Some(PathBuf::from(v));
        }
        if let Some((k, v)) = get("SESSION_INTENT_EMBED_DIM") {
            c.embedder.dim = parse(&k, &v)?;
        }
        if let Some((k, v)) = get("SESSION_INTENT_EMBED_BACKEND") {
            c.embedder.backend = match v.as_str() {
                "hash" => Backend::Hash,
                "external" => Backend::External,
                _ => return Err(ConfigError { var: k, message: format!("unknown backend {v:?}") }),
            };
        }
        if let Some((_, v)) = get("SESSION_INTENT_EMBED_ENDPOINT") {
            c.embedder.external.endpoint = v;
        }
        if let Some((k, v)) = get("SESSION_INTENT_EMBED_TIMEOUT_MS") {
            c.embedder.external.timeout_ms = parse(&k, &v)?;
        }
        if let Some((k, v)) = get("SESSION_INTENT_MODE") {
            c.mode = parse(&k, &v)?;
        }
        if let Some((k, v)) = get("SESSION_INTENT_ENGAGEMENTS") {
            c.context.engagement_kinds = parse(&k, &v)?;
        }
        if let Some((k, v)) = get("SESSION_INTENT_TTL_MS") {
            c.store.ttl_ms = parse(&k, &v)?;
        }
        if let Some((k, v)) = get("SESSION_INTENT_MAX_SESSIONS") {
            c.store.max_sessions = parse(&k, &v)?;
        }
        if let Some((_, v)) = get("SESSION_INTENT_SNAPSHOT") {
            c.store.snapshot_path = Some(PathBuf::from(v));
        }
        if let Some((k, v)) = get("SESSION_INTENT_REQUIRE_SESSION") {
            c.require_session = parse(&k, &v)?;
        }
        if let Some((k, v)) = get("SESSION_INTENT_THRESHOLD") {
            c.default_threshold = parse(&k, &v)?;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn from_env() -> Result<Self, ConfigError> {
        Self::from_lookup(|k| std::env::var(k).ok())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |var: &str, message: &str| Err(ConfigError { var: var.into(), message: message.into() });
        if self.store.ttl_ms == 0 {
            return bad("ttl_ms", "must be positive");
        }
        if self.store.max_sessions == 0 {
            return bad("max_sessions", "must be positive");
        }
        if !(self.default_threshold > 0.0 && self.default_threshold < 1.0) {
            return bad("threshold", "must lie in (0, 1)");
        }
        if self.sweep_interval_ms == 0 {
            return bad("sweep_interval_ms", "must be positive");
        }
        Ok(())
    }
}
