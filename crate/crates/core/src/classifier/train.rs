//! Mini-batch gradient descent on mean cross-entropy with an L2 penalty.
//!
//! Objective over a batch `B`:
//! `L = (1/|B|) * sum_i -ln p(y_i | x_i) + (l2/2) * ||W||^2`.
//! Bias terms are not penalized.
//!
//! The learning rate is per example: each batch step moves the parameters by
//! `learning_rate * |B|` times the gradient of the mean objective, i.e. by
//! `learning_rate` times the summed per-example gradients.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::softmax;
use super::{ClassifierError, LabelVocab, SoftmaxModel};
use crate::dataset::TrainingExample;
use crate::embed::{Embedder, EmbeddingVector};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub l2_penalty: f64,
    pub seed: u64,
}

impl TrainConfig {
    /// Defaults for everything except the seed, which is always explicit.
    pub fn with_seed(seed: u64) -> Self {
        TrainConfig { epochs: 5, batch_size: 256, learning_rate: 0.05, l2_penalty: 1e-6, seed }
    }

    fn validate(&self) -> Result<(), ClassifierError> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(ClassifierError::BadConfig("epochs and batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(ClassifierError::BadConfig("learning_rate must be positive".into()));
        }
        if !(self.l2_penalty >= 0.0 && self.l2_penalty.is_finite()) {
            return Err(ClassifierError::BadConfig("l2_penalty must be non-negative".into()));
        }
        Ok(())
    }
}

/// Non-zero entries of an input vector, in index order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseRow<T> {
    idx: Vec<u32>,
    val: Vec<T>,
}

impl<T: Scalar> SparseRow<T> {
    pub fn from_dense(x: &[T]) -> Self {
        let mut row = SparseRow { idx: Vec::new(), val: Vec::new() };
        for (i, v) in x.iter().enumerate() {
            if !v.is_zero() {
                row.idx.push(i as u32);
                row.val.push(*v);
            }
        }
        row
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, T)> + '_ {
        self.idx.iter().map(|i| *i as usize).zip(self.val.iter().copied())
    }

    pub fn nnz(&self) -> usize {
        self.idx.len()
    }
}

/// Gradient of the batch objective with respect to `W` (row-major) and `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient<T> {
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

/// Batch objective and its analytic gradient at the model's current parameters.
pub fn batch_loss_and_gradient<T: Scalar>(
    model: &SoftmaxModel<T>,
    xs: &[SparseRow<T>],
    ys: &[usize],
    l2_penalty: f64,
) -> (T, Gradient<T>) {
    let mut grad = Gradient { weights: vec![T::zero(); model.weights.len()], bias: vec![T::zero(); model.bias.len()] };
    let loss = accumulate(model, xs.iter().zip(ys.iter().copied()), xs.len(), T::of(l2_penalty), &mut grad);
    (loss, grad)
}

fn accumulate<'a, T: Scalar>(
    model: &SoftmaxModel<T>,
    batch: impl Iterator<Item = (&'a SparseRow<T>, usize)>,
    batch_len: usize,
    l2: T,
    grad: &mut Gradient<T>,
) -> T {
    let d = model.d_in;
    let scale = T::one() / T::of(batch_len as f64);
    let mut ce = T::zero();
    for (x, y) in batch {
        let probs = softmax(&model.sparse_logits(x));
        ce -= probs[y].max(T::min_positive_value()).ln();
        for (k, p) in probs.into_iter().enumerate() {
            let delta = if k == y { p - T::one() } else { p } * scale;
            grad.bias[k] += delta;
            let row = &mut grad.weights[k * d..(k + 1) * d];
            for (j, v) in x.iter() {
                row[j] += delta * v;
            }
        }
    }
    let mut sq = T::zero();
    for (g, w) in grad.weights.iter_mut().zip(&model.weights) {
        *g += l2 * *w;
        sq += *w * *w;
    }
    ce * scale + l2 * sq / T::of(2.0)
}

fn dataset_loss<T: Scalar>(model: &SoftmaxModel<T>, xs: &[SparseRow<T>], ys: &[usize], l2: T) -> T {
    let mut ce = T::zero();
    for (x, &y) in xs.iter().zip(ys) {
        let probs = softmax(&model.sparse_logits(x));
        ce -= probs[y].max(T::min_positive_value()).ln();
    }
    let sq = model.weights.iter().fold(T::zero(), |a, w| a + *w * *w);
    ce / T::of(xs.len() as f64) + l2 * sq / T::of(2.0)
}

/// Embeds every example once and fits a model on the result.
pub fn train<T: Scalar, E: Embedder<T> + ?Sized>(
    examples: &[TrainingExample],
    embedder: &E,
    config: &TrainConfig,
) -> Result<SoftmaxModel<T>, ClassifierError> {
    let mut rows = Vec::with_capacity(examples.len());
    let mut d_in = embedder.dim();
    for ex in examples {
        let v = embedder.embed(&ex.input_text)?;
        d_in = v.dim();
        rows.push(SparseRow::from_dense(v.as_slice()));
    }
    let labels: Vec<&str> = examples.iter().map(|e| e.label.as_str()).collect();
    fit(rows, &labels, d_in, config)
}

pub fn train_on_vectors<T: Scalar, S: AsRef<str>>(
    vectors: &[EmbeddingVector<T>],
    labels: &[S],
    config: &TrainConfig,
) -> Result<SoftmaxModel<T>, ClassifierError> {
    let d_in = vectors.first().map(EmbeddingVector::dim).ok_or(ClassifierError::Empty)?;
    if let Some(bad) = vectors.iter().find(|v| v.dim() != d_in) {
        return Err(ClassifierError::DimensionMismatch { expected: d_in, got: bad.dim() });
    }
    let rows = vectors.iter().map(|v| SparseRow::from_dense(v.as_slice())).collect();
    let labels: Vec<&str> = labels.iter().map(AsRef::as_ref).collect();
    fit(rows, &labels, d_in, config)
}

fn fit<T: Scalar>(
    rows: Vec<SparseRow<T>>,
    labels: &[&str],
    d_in: usize,
    config: &TrainConfig,
) -> Result<SoftmaxModel<T>, ClassifierError> {
    config.validate()?;
    if rows.is_empty() {
        return Err(ClassifierError::Empty);
    }
    let vocab = LabelVocab::new(labels.iter().copied())?;
    let ys: Vec<usize> = labels.iter().map(|l| vocab.index_of(l).expect("label drawn from vocab")).collect();
    let mut model = SoftmaxModel::zeros(vocab, d_in)?;
    let lr = T::of(config.learning_rate);
    let l2 = T::of(config.l2_penalty);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..rows.len()).collect();
    let mut grad = Gradient { weights: vec![T::zero(); model.weights.len()], bias: vec![T::zero(); model.bias.len()] };
    let mut last_loss = f64::NAN;
    let mut losses = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for (batch, chunk) in order.chunks(config.batch_size).enumerate() {
            grad.weights.iter_mut().for_each(|g| *g = T::zero());
            grad.bias.iter_mut().for_each(|g| *g = T::zero());
            let items = chunk.iter().map(|&i| (&rows[i], ys[i]));
            let loss = accumulate(&model, items, chunk.len(), l2, &mut grad);
            if !loss.is_finite() {
                return Err(ClassifierError::NonFiniteLoss { epoch, batch, last_loss });
            }
            last_loss = loss.to_f64_exact();
            let step = lr * T::of(chunk.len() as f64);
            for (w, g) in model.weights.iter_mut().zip(&grad.weights) {
                *w -= step * *g;
            }
            for (b, g) in model.bias.iter_mut().zip(&grad.bias) {
                *b -= step * *g;
            }
        }
        let loss = dataset_loss(&model, &rows, &ys, l2);
        if !loss.is_finite() {
            return Err(ClassifierError::NonFiniteLoss { epoch, batch: usize::MAX, last_loss });
        }
        last_loss = loss.to_f64_exact();
        losses.push(last_loss);
    }
    model.train_config = Some(*config);
    model.epoch_losses = losses;
    Ok(model)
}
