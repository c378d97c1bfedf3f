//! Session-aware query intent.
//!
//! Reconstructs search sessions from event logs, links consecutive queries
//! through a token-match gate, embeds the resulting context text and trains
//! a softmax product-type classifier on session outcomes.
//!
//! The numeric core ([`embed`], [`classifier`]) is generic over [`Scalar`];
//! the aliases below fix it to `f64` (the default everywhere) or `f32`.

pub mod classifier;
pub mod context;
pub mod dataset;
pub mod embed;
pub mod eval;
pub mod scalar;
pub mod session;

pub use scalar::Scalar;

pub type Embedding = embed::EmbeddingVector<f64>;
pub type Embedding32 = embed::EmbeddingVector<f32>;
pub type Model = classifier::SoftmaxModel<f64>;
pub type Model32 = classifier::SoftmaxModel<f32>;
