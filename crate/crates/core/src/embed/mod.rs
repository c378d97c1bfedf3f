//! Embedding contract: fixed-dimension vectors from rendered context text.

mod external;
mod hash;
mod vector;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use external::{ExternalConfig, ExternalEmbedder};
pub use hash::{fnv1a64, HashEmbedder};
pub use vector::{combine, CombineMode, EmbeddingVector};

use crate::scalar::Scalar;

pub const DEFAULT_DIM: usize = 512;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EmbedError {
    #[error("embedding request timed out")]
    Timeout,
    #[error("embedding transport error: {0}")]
    Transport(String),
    #[error("embedding service answered HTTP {0}")]
    Status(u16),
    #[error("could not decode embedding response: {0}")]
    Decode(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid embedding dimension {0}")]
    BadDimension(usize),
    #[error("text has {len} chars, limit is {max}")]
    TextTooLong { len: usize, max: usize },
    #[error("embedding contains non-finite values")]
    NonFinite,
}

impl EmbedError {
    /// Transient failures worth retrying; everything else is a configuration
    /// or input problem.
    pub fn is_retriable(&self) -> bool {
        match self {
            EmbedError::Timeout | EmbedError::Transport(_) => true,
            EmbedError::Status(code) => *code >= 500,
            _ => false,
        }
    }
}

pub trait Embedder<T: Scalar>: Send + Sync {
    fn dim(&self) -> usize;

    fn embed(&self, text: &str) -> Result<EmbeddingVector<T>, EmbedError>;
}

impl<T: Scalar, E: Embedder<T> + ?Sized> Embedder<T> for Box<E> {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector<T>, EmbedError> {
        (**self).embed(text)
    }
}

impl<T: Scalar, E: Embedder<T> + ?Sized> Embedder<T> for std::sync::Arc<E> {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector<T>, EmbedError> {
        (**self).embed(text)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    #[default]
    Hash,
    External,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbedderConfig {
    pub dim: usize,
    pub backend: Backend,
    pub combine_mode: CombineMode,
    pub external: ExternalConfig,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        EmbedderConfig {
            dim: DEFAULT_DIM,
            backend: Backend::Hash,
            combine_mode: CombineMode::Sum,
            external: ExternalConfig::default(),
        }
    }
}

impl EmbedderConfig {
    pub fn hash(dim: usize) -> Self {
        EmbedderConfig { dim, ..EmbedderConfig::default() }
    }

    pub fn build<T: Scalar>(&self) -> Result<Box<dyn Embedder<T>>, EmbedError> {
        Ok(match self.backend {
            Backend::Hash => Box::new(HashEmbedder::new(self.dim)?),
            Backend::External => Box::new(ExternalEmbedder::new(self.external.clone(), self.dim)?),
        })
    }
}
