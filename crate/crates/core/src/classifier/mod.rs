//! K-class softmax classifier over embedding vectors.

mod io;
mod model;
mod train;
mod vocab;

use thiserror::Error;

pub use io::{load_model, read_model, save_model, write_model, FORMAT_VERSION, MAGIC};
pub use model::{softmax, SoftmaxModel, ThresholdRule};
pub use train::{batch_loss_and_gradient, train, train_on_vectors, Gradient, SparseRow, TrainConfig};
pub use vocab::LabelVocab;

use crate::embed::EmbedError;

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("need at least 2 distinct labels, found {0}")]
    TooFewClasses(usize),
    #[error("no training examples")]
    Empty,
    #[error("input dimension mismatch: model expects {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("threshold must lie in (0, 1), got {0}")]
    BadThreshold(f64),
    #[error("invalid training config: {0}")]
    BadConfig(String),
    #[error("non-finite loss at epoch {epoch}, batch {batch} (last finite loss {last_loss})")]
    NonFiniteLoss { epoch: usize, batch: usize, last_loss: f64 },
    #[error("bad magic: not a model file")]
    BadMagic,
    #[error("unsupported model format version {0} (expected {FORMAT_VERSION})")]
    UnsupportedVersion(u32),
    #[error("model file truncated")]
    Truncated,
    #[error("corrupt model file: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Io(std::io::Error),
}

impl From<std::io::Error> for ClassifierError {
    fn from(e: std::io::Error) -> Self {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            ClassifierError::Truncated
        } else {
            ClassifierError::Io(e)
        }
    }
}
