use serde::{Deserialize, Serialize};

use super::train::{SparseRow, TrainConfig};
use super::{ClassifierError, LabelVocab};
use crate::embed::EmbeddingVector;
use crate::scalar::Scalar;

/// How the per-class cutoff of [`SoftmaxModel::predict_set_with`] is read.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdRule {
    /// Keep classes with `p > t`.
    #[default]
    Probability,
    /// Keep classes with `p / (1 - p) > t`, i.e. `p > t / (1 + t)`.
    Odds,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxModel<T> {
    pub(crate) weights: Vec<T>,
    pub(crate) bias: Vec<T>,
    pub(crate) vocab: LabelVocab,
    pub(crate) d_in: usize,
    pub(crate) train_config: Option<TrainConfig>,
    pub(crate) epoch_losses: Vec<f64>,
}

/// Numerically stable softmax.
pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|z| (*z - max).exp()).collect();
    let sum = exps.iter().fold(T::zero(), |a, b| a + *b);
    exps.into_iter().map(|e| e / sum).collect()
}

impl<T: Scalar> SoftmaxModel<T> {
    /// Zero-initialized model.
    pub fn zeros(vocab: LabelVocab, d_in: usize) -> Result<Self, ClassifierError> {
        if d_in == 0 {
            return Err(ClassifierError::BadConfig("input dimension must be positive".into()));
        }
        let k = vocab.len();
        Ok(SoftmaxModel {
            weights: vec![T::zero(); k * d_in],
            bias: vec![T::zero(); k],
            vocab,
            d_in,
            train_config: None,
            epoch_losses: Vec::new(),
        })
    }

    /// Builds a model from explicit parameters; `weights` is `K x d_in` row-major.
    pub fn from_parts(vocab: LabelVocab, d_in: usize, weights: Vec<T>, bias: Vec<T>) -> Result<Self, ClassifierError> {
        let k = vocab.len();
        if d_in == 0 || weights.len() != k * d_in || bias.len() != k {
            return Err(ClassifierError::Corrupt(format!("parameter shapes do not match K={k}, d_in={d_in}")));
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(ClassifierError::Corrupt("non-finite parameter".into()));
        }
        Ok(SoftmaxModel { weights, bias, vocab, d_in, train_config: None, epoch_losses: Vec::new() })
    }

    pub fn vocab(&self) -> &LabelVocab {
        &self.vocab
    }

    pub fn n_classes(&self) -> usize {
        self.vocab.len()
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn bias(&self) -> &[T] {
        &self.bias
    }

    /// Training settings, present only on models produced by training in this process.
    pub fn train_config(&self) -> Option<&TrainConfig> {
        self.train_config.as_ref()
    }

    /// Full-dataset training loss after each epoch.
    pub fn epoch_losses(&self) -> &[f64] {
        &self.epoch_losses
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.epoch_losses.last().copied()
    }

    pub(crate) fn row(&self, k: usize) -> &[T] {
        &self.weights[k * self.d_in..(k + 1) * self.d_in]
    }

    pub(crate) fn sparse_logits(&self, x: &SparseRow<T>) -> Vec<T> {
        (0..self.n_classes())
            .map(|k| {
                let row = self.row(k);
                x.iter().fold(self.bias[k], |acc, (j, v)| acc + row[j] * v)
            })
            .collect()
    }

    pub fn logits(&self, x: &[T]) -> Result<Vec<T>, ClassifierError> {
        if x.len() != self.d_in {
            return Err(ClassifierError::DimensionMismatch { expected: self.d_in, got: x.len() });
        }
        Ok(self.sparse_logits(&SparseRow::from_dense(x)))
    }

    pub fn predict_dist(&self, x: &EmbeddingVector<T>) -> Result<Vec<T>, ClassifierError> {
        Ok(softmax(&self.logits(x.as_slice())?))
    }

    /// Most probable class; ties go to the lower class index.
    pub fn predict_top(&self, x: &EmbeddingVector<T>) -> Result<(&str, T), ClassifierError> {
        let probs = self.predict_dist(x)?;
        let (best, p) = argmax(&probs);
        Ok((self.vocab.label(best), p))
    }

    /// Classes with probability strictly above `threshold`, most probable first.
    pub fn predict_set(&self, x: &EmbeddingVector<T>, threshold: f64) -> Result<Vec<(&str, T)>, ClassifierError> {
        self.predict_set_with(x, threshold, ThresholdRule::Probability)
    }

    pub fn predict_set_with(
        &self,
        x: &EmbeddingVector<T>,
        threshold: f64,
        rule: ThresholdRule,
    ) -> Result<Vec<(&str, T)>, ClassifierError> {
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(ClassifierError::BadThreshold(threshold));
        }
        let cutoff = match rule {
            ThresholdRule::Probability => threshold,
            ThresholdRule::Odds => threshold / (1.0 + threshold),
        };
        let cutoff = T::of(cutoff);
        let probs = self.predict_dist(x)?;
        let mut set: Vec<(usize, T)> = probs.into_iter().enumerate().filter(|(_, p)| *p > cutoff).collect();
        set.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal).then(a.0.cmp(&b.0)));
        Ok(set.into_iter().map(|(k, p)| (self.vocab.label(k), p)).collect())
    }
}

pub(crate) fn argmax<T: Scalar>(xs: &[T]) -> (usize, T) {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate().skip(1) {
        if *x > xs[best] {
            best = i;
        }
    }
    (best, xs[best])
}
