//! Signed feature hashing of field-tagged text.
//!
//! Every token is prefixed with the field tag governing it (`CUR:water`,
//! `PREV:water`), hashed with 64-bit FNV-1a and folded into `dim` buckets.
//! Bit 63 of the hash picks the sign. Adjacent tokens inside one field also
//! contribute a bigram feature (`CUR:bottled water`). Counts are accumulated
//! as integers so the output is identical on every platform.

use super::{EmbedError, Embedder, EmbeddingVector};
use crate::context::{TAG_ATC, TAG_CLICK, TAG_CUR, TAG_PREV};
use crate::scalar::Scalar;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// Field name for tokens that precede any tag.
const UNTAGGED: &str = "TXT";

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, b| (h ^ u64::from(*b)).wrapping_mul(FNV_PRIME))
}

fn field_of(token: &str) -> Option<&'static str> {
    match token {
        TAG_PREV => Some("PREV"),
        TAG_ATC => Some("ATC"),
        TAG_CLICK => Some("CLK"),
        TAG_CUR => Some("CUR"),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashEmbedder {
    dim: usize,
}

impl HashEmbedder {
    pub fn new(dim: usize) -> Result<Self, EmbedError> {
        if dim < 2 {
            return Err(EmbedError::BadDimension(dim));
        }
        Ok(HashEmbedder { dim })
    }

    /// Signed bucket counts before normalization.
    pub fn counts(&self, text: &str) -> Vec<i64> {
        let mut counts = vec![0i64; self.dim];
        let mut add = |feature: &str| {
            let h = fnv1a64(feature.as_bytes());
            let idx = (h % self.dim as u64) as usize;
            counts[idx] += if h >> 63 == 0 { 1 } else { -1 };
        };
        let mut field = UNTAGGED;
        let mut prev: Option<&str> = None;
        let mut buf = String::new();
        for token in text.split_whitespace() {
            if let Some(f) = field_of(token) {
                field = f;
                prev = None;
                continue;
            }
            buf.clear();
            buf.push_str(field);
            buf.push(':');
            buf.push_str(token);
            add(&buf);
            if let Some(p) = prev {
                buf.clear();
                buf.push_str(field);
                buf.push(':');
                buf.push_str(p);
                buf.push(' ');
                buf.push_str(token);
                add(&buf);
            }
            prev = Some(token);
        }
        counts
    }
}

impl<T: Scalar> Embedder<T> for HashEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector<T>, EmbedError> {
        let counts = self.counts(text);
        let sum_sq: i64 = counts.iter().map(|c| c * c).sum();
        if sum_sq == 0 {
            return Ok(EmbeddingVector::zeros(self.dim));
        }
        let norm = T::of(sum_sq as f64).sqrt();
        let values = counts.iter().map(|c| T::of(*c as f64) / norm).collect();
        EmbeddingVector::from_normalized(values)
    }
}
