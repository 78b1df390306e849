//! Storage scalar abstraction.
//!
//! Tensors store `f32` or `f64`; every reduction (convolution accumulators,
//! pooled means, norm denominators) runs in `f64` regardless of storage so
//! that oracle-equivalence tests hold to tight tolerances.

use std::fmt::{Debug, Display};

use num_traits::Float;

/// Scalar types usable as tensor storage.
pub trait Scalar: Float + Debug + Display + Send + Sync + 'static {
    fn as_f64(self) -> f64;
    fn from_f64(v: f64) -> Self;
}

impl Scalar for f32 {
    #[inline(always)]
    fn as_f64(self) -> f64 {
        self as f64
    }

    #[inline(always)]
    fn from_f64(v: f64) -> Self {
        v as f32
    }
}

impl Scalar for f64 {
    #[inline(always)]
    fn as_f64(self) -> f64 {
        self
    }

    #[inline(always)]
    fn from_f64(v: f64) -> Self {
        v
    }
}
