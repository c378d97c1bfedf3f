//! Weighted f1, prediction-set histograms, the synthetic corpus and the
//! six-variant ablation runner.

mod ablation;
mod metrics;
mod synth;

use thiserror::Error;

pub use ablation::{evaluate, run_ablation, AblationConfig, AblationReport, EvalReport};
pub use metrics::{classification_report, label_set, weighted_f1, ClassMetrics};
pub use synth::{generate_synthetic_corpus, SynthConfig};

use crate::classifier::ClassifierError;
use crate::classifier::SoftmaxModel;
use crate::dataset::DatasetError;
use crate::embed::{EmbedError, EmbeddingVector};
use crate::scalar::Scalar;
use std::collections::BTreeMap;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("gold and predicted label counts differ ({gold} vs {pred})")]
    LengthMismatch { gold: usize, pred: usize },
    #[error("nothing to evaluate")]
    Empty,
    #[error("invalid synthetic corpus config: {0}")]
    BadSynthConfig(String),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

/// Counts of prediction-set sizes at `threshold`; values sum to the number of vectors.
pub fn set_size_histogram<T: Scalar>(
    model: &SoftmaxModel<T>,
    vectors: &[EmbeddingVector<T>],
    threshold: f64,
) -> Result<BTreeMap<usize, usize>, EvalError> {
    let mut hist = BTreeMap::new();
    for v in vectors {
        let size = model.predict_set(v, threshold)?.len();
        *hist.entry(size).or_insert(0) += 1;
    }
    Ok(hist)
}
