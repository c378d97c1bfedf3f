use serde::{Deserialize, Serialize};

use super::EmbedError;
use crate::scalar::Scalar;

/// Dense embedding with unit L2 norm, or all zeros.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector<T> {
    values: Vec<T>,
}

impl<T: Scalar> EmbeddingVector<T> {
    pub fn zeros(dim: usize) -> Self {
        EmbeddingVector { values: vec![T::zero(); dim] }
    }

    /// L2-normalizes `values`. Non-finite input is rejected.
    pub fn normalized(mut values: Vec<T>) -> Result<Self, EmbedError> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EmbedError::NonFinite);
        }
        let norm = l2(&values);
        if norm > T::zero() {
            for v in &mut values {
                *v /= norm;
            }
        }
        Ok(EmbeddingVector { values })
    }

    /// Wraps values that are already unit-norm (or zero), such as a stored
    /// state vector. Only finiteness is checked.
    pub fn from_normalized(values: Vec<T>) -> Result<Self, EmbedError> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EmbedError::NonFinite);
        }
        Ok(EmbeddingVector { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<T> {
        self.values
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| v.is_zero())
    }

    pub fn norm(&self) -> T {
        l2(&self.values)
    }

    pub fn dot(&self, other: &Self) -> T {
        self.values.iter().zip(&other.values).fold(T::zero(), |acc, (a, b)| acc + *a * *b)
    }

    /// Cosine similarity; zero when either side is the zero vector.
    pub fn cosine(&self, other: &Self) -> T {
        let denom = self.norm() * other.norm();
        if denom > T::zero() {
            self.dot(other) / denom
        } else {
            T::zero()
        }
    }
}

fn l2<T: Scalar>(values: &[T]) -> T {
    values.iter().fold(T::zero(), |acc, v| acc + *v * *v).sqrt()
}

/// How a cached session vector S is merged with the query vector Q.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CombineMode {
    /// `[q ‖ s]`, renormalized; doubles the dimension.
    Concat,
    #[default]
    Sum,
    QueryOnly,
    SessionOnly,
}

impl CombineMode {
    pub fn output_dim(self, dim: usize) -> usize {
        match self {
            CombineMode::Concat => 2 * dim,
            _ => dim,
        }
    }
}

/// Merges `q` with an optional session vector; a missing `s` acts as zeros.
pub fn combine<T: Scalar>(
    q: &EmbeddingVector<T>,
    s: Option<&EmbeddingVector<T>>,
    mode: CombineMode,
) -> Result<EmbeddingVector<T>, EmbedError> {
    if let Some(s) = s {
        if s.dim() != q.dim() {
            return Err(EmbedError::DimensionMismatch { expected: q.dim(), got: s.dim() });
        }
    }
    let s = s.filter(|s| !s.is_zero());
    match mode {
        CombineMode::QueryOnly => Ok(q.clone()),
        CombineMode::SessionOnly => Ok(s.cloned().unwrap_or_else(|| EmbeddingVector::zeros(q.dim()))),
        CombineMode::Sum => match s {
            None => Ok(q.clone()),
            Some(s) => EmbeddingVector::normalized(q.values.iter().zip(&s.values).map(|(a, b)| *a + *b).collect()),
        },
        CombineMode::Concat => {
            let mut values = q.values.clone();
            match s {
                Some(s) => values.extend_from_slice(&s.values),
                None => values.resize(2 * q.dim(), T::zero()),
            }
            EmbeddingVector::normalized(values)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn v(xs: &[f64]) -> EmbeddingVector<f64> {
        EmbeddingVector::normalized(xs.to_vec()).unwrap()
    }

    #[test]
    fn sum_with_missing_or_zero_session_is_identity() {
        let q = v(&[0.3, -0.4, 0.5]);
        assert_eq!(combine(&q, None, CombineMode::Sum).unwrap(), q);
        let z = EmbeddingVector::zeros(3);
        assert_eq!(combine(&q, Some(&z), CombineMode::Sum).unwrap(), q);
    }

    #[test]
    fn sum_with_itself_collapses() {
        let q = v(&[0.3, -0.4, 0.5]);
        let out = combine(&q, Some(&q), CombineMode::Sum).unwrap();
        for (a, b) in out.as_slice().iter().zip(q.as_slice()) {
            assert_relative_eq!(*a, *b, epsilon = 1e-15);
        }
    }

    #[test]
    fn concat_is_unit_and_double_width() {
        let q = v(&[1.0, 2.0]);
        let s = v(&[0.0, -3.0]);
        let out = combine(&q, Some(&s), CombineMode::Concat).unwrap();
        assert_eq!(out.dim(), 4);
        assert_relative_eq!(out.norm(), 1.0, epsilon = 1e-12);
        assert_eq!(combine(&q, None, CombineMode::Concat).unwrap().dim(), 4);
    }

    #[test]
    fn passthrough_modes() {
        let q = v(&[1.0, 0.0]);
        let s = v(&[0.0, 1.0]);
        assert_eq!(combine(&q, Some(&s), CombineMode::QueryOnly).unwrap(), q);
        assert_eq!(combine(&q, Some(&s), CombineMode::SessionOnly).unwrap(), s);
        assert!(combine(&q, None, CombineMode::SessionOnly).unwrap().is_zero());
    }

    #[test]
    fn dimension_mismatch_is_fatal() {
        let q = v(&[1.0, 0.0]);
        let s = v(&[1.0, 0.0, 0.0]);
        assert!(matches!(
            combine(&q, Some(&s), CombineMode::Sum),
            Err(EmbedError::DimensionMismatch { expected: 2, got: 3 })
        ));
    }

    #[test]
    fn rejects_non_finite() {
        assert!(EmbeddingVector::<f32>::normalized(vec![1.0, f32::NAN]).is_err());
    }
}
