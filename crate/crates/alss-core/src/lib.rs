//! Building blocks of the ALSS-YOLO detector, reimplemented as a small,
//! deterministic, CPU-only library:
//!
//! - [`tensor`] / [`ops`]: a rank-4 tensor engine with exactly the forward
//!   primitives the blocks need (grouped/depthwise convolution, inference
//!   batch norm, pooling, channel split/concat/shuffle) plus a
//!   finite-difference gradient oracle.
//! - [`blocks`]: the composite modules. CBS/CB, the adaptive channel
//!   split-and-shuffle block (unit stride and downsampling), lightweight
//!   coordinate attention and its full-width baseline, the single-channel
//!   focus transform, and SPPF.
//! - [`netgraph`]: a declarative reconstruction of the full detector graph
//!   with shape propagation, per-layer parameter auditing against the
//!   bundled reference table, BN fusion, forward execution, and a
//!   line-oriented config format.
//! - [`boxloss`]: IoU, CIoU, SIOU and FineSIOU bounding-box losses with
//!   dual-number gradients and a gradient-descent regression harness.
//! - [`evalmetrics`]: greedy detection matching, precision/recall curves,
//!   average precision and mAP, and max-F1 operating points.
//!
//! Core numerics are generic over the storage scalar (`f32`/`f64`) via
//! [`Scalar`]; accumulation always happens in `f64`. Concrete aliases for
//! the common instantiations live at the crate root.

pub mod blocks;
pub mod boxloss;
pub mod error;
pub mod evalmetrics;
pub mod fmt;
pub mod netgraph;
pub mod ops;
pub mod ratio;
pub mod reference;
pub mod scalar;
pub mod tensor;

pub use error::{CoreError, Result};
pub use ratio::Ratio;
pub use scalar::Scalar;

/// Rank-4 tensor with `f64` storage, the default precision for all audits
/// and oracle comparisons.
pub type Tensor4F64 = tensor::Tensor4<f64>;
/// Rank-4 tensor with `f32` storage.
pub type Tensor4F32 = tensor::Tensor4<f32>;
/// The reference detector graph at `f64` precision.
pub type NetworkGraphF64 = netgraph::NetworkGraph<f64>;
/// Center-format bounding box at `f64` precision.
pub type BBoxF64 = boxloss::BBox<f64>;

#[cfg(test)]
pub(crate) fn test_rng(seed: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}
