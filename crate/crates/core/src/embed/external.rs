//! Blocking client for an external embedding service.
//!
//! Wire contract: `POST {endpoint}` with `{"text": ...}`, answered by
//! `{"vector": [..d floats..]}`. The vector is renormalized locally.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{EmbedError, Embedder, EmbeddingVector};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExternalConfig {
    /// Full URL of the embed endpoint, e.g. `http://127.0.0.1:8080/embed`.
    pub endpoint: String,
    pub timeout_ms: u64,
    pub max_chars: usize,
    pub max_in_flight: usize,
}

impl Default for ExternalConfig {
    fn default() -> Self {
        ExternalConfig {
            endpoint: "http://127.0.0.1:8080/embed".into(),
            timeout_ms: 200,
            max_chars: 8192,
            max_in_flight: 16,
        }
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    text: &'a str,
}

#[derive(Deserialize)]
struct EmbedResponse {
    vector: Vec<f64>,
}

pub struct ExternalEmbedder {
    config: ExternalConfig,
    dim: usize,
    client: reqwest::blocking::Client,
    in_flight: Mutex<usize>,
    slot_freed: Condvar,
}

impl std::fmt::Debug for ExternalEmbedder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExternalEmbedder").field("config", &self.config).field("dim", &self.dim).finish()
    }
}

impl ExternalEmbedder {
    pub fn new(config: ExternalConfig, dim: usize) -> Result<Self, EmbedError> {
        if dim == 0 {
            return Err(EmbedError::BadDimension(dim));
        }
        let timeout = Duration::from_millis(config.timeout_ms.max(1));
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .connect_timeout(timeout)
            .build()
            .map_err(|e| EmbedError::Transport(e.to_string()))?;
        Ok(ExternalEmbedder { config, dim, client, in_flight: Mutex::new(0), slot_freed: Condvar::new() })
    }

    fn acquire(&self) {
        let limit = self.config.max_in_flight.max(1);
        let mut n = self.in_flight.lock().unwrap_or_else(|e| e.into_inner());
        while *n >= limit {
            n = self.slot_freed.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n += 1;
    }

    fn release(&self) {
        let mut n = self.in_flight.lock().unwrap_or_else(|e| e.into_inner());
        *n -= 1;
        self.slot_freed.notify_one();
    }

    fn request(&self, text: &str) -> Result<Vec<f64>, EmbedError> {
        let response =
            self.client.post(&self.config.endpoint).json(&EmbedRequest { text }).send().map_err(transport_error)?;
        let status = response.status();
        if !status.is_success() {
            return Err(EmbedError::Status(status.as_u16()));
        }
        let body: EmbedResponse = response.json().map_err(transport_error)?;
        Ok(body.vector)
    }
}

fn transport_error(e: reqwest::Error) -> EmbedError {
    if e.is_timeout() {
        EmbedError::Timeout
    } else if e.is_decode() {
        EmbedError::Decode(e.to_string())
    } else {
        EmbedError::Transport(e.to_string())
    }
}

impl<T: Scalar> Embedder<T> for ExternalEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector<T>, EmbedError> {
        let len = text.chars().count();
        if len > self.config.max_chars {
            return Err(EmbedError::TextTooLong { len, max: self.config.max_chars });
        }
        self.acquire();
        let result = self.request(text);
        self.release();
        let raw = result?;
        if raw.len() != self.dim {
            return Err(EmbedError::DimensionMismatch { expected: self.dim, got: raw.len() });
        }
        EmbeddingVector::normalized(raw.into_iter().map(T::of).collect())
    }
}
