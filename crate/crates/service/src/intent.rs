//! The prediction path shared by the HTTP handler and the command line.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use session_intent::classifier::ClassifierError;
use session_intent::context::{
    normalize, render_context_text, render_state_text, token_match, ContextConfig, ContextError, SessionContext,
    TAG_CUR,
};
use session_intent::embed::{combine, CombineMode, EmbedError, Embedder};
use session_intent::{Embedding, Model};
use thiserror::Error;

use crate::store::SessionStateRecord;

pub const DEFAULT_THRESHOLD: f64 = 0.1;

#[derive(Debug, Error)]
pub enum PredictError {
    #[error(transparent)]
    Context(#[from] ContextError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error("model expects {expected} inputs but the serving path produces {got}")]
    ModelShape { expected: usize, got: usize },
}

/// How a gated request is turned into a classifier input.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ServingMode {
    /// Re-embed the full rendered context text.
    #[default]
    Joint,
    /// Merge the cached state vector with the query vector.
    Vector(CombineMode),
}

impl std::str::FromStr for ServingMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "joint" => ServingMode::Joint,
            "sum" => ServingMode::Vector(CombineMode::Sum),
            "concat" => ServingMode::Vector(CombineMode::Concat),
            "query_only" => ServingMode::Vector(CombineMode::QueryOnly),
            "session_only" => ServingMode::Vector(CombineMode::SessionOnly),
            other => return Err(format!("unknown serving mode {other:?}")),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scored {
    pub pt: String,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntentResponse {
    pub top: Scored,
    pub set: Vec<Scored>,
    pub gated: bool,
    /// Text that was embedded: the full context when gated, otherwise `[CUR] ..`.
    pub input: String,
    /// Session version the prediction was computed from; only present when gated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub version: Option<u64>,
}

/// Rendered state of a record: its last query (gated against itself) plus
/// the engagements on it. `None` before the first query.
pub fn state_text(record: &SessionStateRecord, context: &ContextConfig) -> Option<String> {
    let last = record.last_query.as_ref()?;
    let ctx = SessionContext::gated(&last.raw, &record.engaged.atc, &record.engaged.click, &last.tokens, context);
    Some(render_state_text(&ctx, context))
}

pub fn state_vector(
    record: &SessionStateRecord,
    context: &ContextConfig,
    embedder: &dyn Embedder<f64>,
) -> Result<Option<Embedding>, EmbedError> {
    state_text(record, context).map(|text| embedder.embed(&text)).transpose()
}

pub struct Predictor {
    model: Arc<Model>,
    embedder: Arc<dyn Embedder<f64>>,
    mode: ServingMode,
    context: ContextConfig,
}

impl Predictor {
    pub fn new(
        model: Arc<Model>,
        embedder: Arc<dyn Embedder<f64>>,
        mode: ServingMode,
        context: ContextConfig,
    ) -> Result<Self, PredictError> {
        let got = match mode {
            ServingMode::Joint => embedder.dim(),
            ServingMode::Vector(m) => m.output_dim(embedder.dim()),
        };
        if model.d_in() != got {
            return Err(PredictError::ModelShape { expected: model.d_in(), got });
        }
        Ok(Predictor { model, embedder, mode, context })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn embedder(&self) -> &dyn Embedder<f64> {
        self.embedder.as_ref()
    }

    pub fn mode(&self) -> ServingMode {
        self.mode
    }

    pub fn predict(
        &self,
        state: Option<&SessionStateRecord>,
        query: &str,
        threshold: f64,
    ) -> Result<IntentResponse, PredictError> {
        let cur = normalize(query)?;
        let last = state.and_then(|r| r.last_query.as_ref().map(|q| (r, q)));
        let (gated, input, x) = match last {
            Some((record, prev)) if token_match(&prev.tokens, &cur) => {
                let ctx =
                    SessionContext::gated(&prev.raw, &record.engaged.atc, &record.engaged.click, &cur, &self.context);
                let text = render_context_text(&ctx, query, &self.context)?;
                let x = match self.mode {
                    ServingMode::Joint => self.embedder.embed(&text)?,
                    ServingMode::Vector(m) => {
                        let q = self.embedder.embed(&format!("{TAG_CUR} {}", cur.joined()))?;
                        combine(&q, record.cached_state_vector.as_ref(), m)?
                    }
                };
                (Some(record.version), text, x)
            }
            _ => {
                let text = render_context_text(&SessionContext::empty(), query, &self.context)?;
                let q = self.embedder.embed(&text)?;
                let x = match self.mode {
                    ServingMode::Joint => q,
                    ServingMode::Vector(m) => combine(&q, None, m)?,
                };
                (None, text, x)
            }
        };
        let (pt, p) = self.model.predict_top(&x)?;
        let top = Scored { pt: pt.to_string(), p };
        let set = self
            .model
            .predict_set(&x, threshold)?
            .into_iter()
            .map(|(pt, p)| Scored { pt: pt.to_string(), p })
            .collect();
        Ok(IntentResponse { top, set, gated: gated.is_some(), input, version: gated })
    }
}
