//! Scalar abstraction shared by the embedding and classifier code.

use std::fmt::{Debug, Display, LowerExp};

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating point type the numeric core is generic over (`f32` or `f64`).
pub trait Scalar:
    'static + Float + NumAssign + FromPrimitive + ToPrimitive + Default + Debug + Display + LowerExp + Send + Sync
{
    /// Lossless widening used by the on-disk model format.
    fn to_f64_exact(self) -> f64;

    fn from_f64_lossy(v: f64) -> Self;

    fn of(v: f64) -> Self {
        Self::from_f64_lossy(v)
    }
}

impl Scalar for f32 {
    fn to_f64_exact(self) -> f64 {
        f64::from(self)
    }

    fn from_f64_lossy(v: f64) -> Self {
        v as f32
    }
}

impl Scalar for f64 {
    fn to_f64_exact(self) -> f64 {
        self
    }

    fn from_f64_lossy(v: f64) -> Self {
        v
    }
}
