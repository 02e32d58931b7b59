//! Minimal differentiable tensor engine.
//!
//! Dense row-major tensors, a tape-based reverse-mode [`Graph`], the
//! convolution family used by the super-resolution networks (2D/3D
//! cross-correlation and the transposed 3D convolution), batch
//! normalization, a handful of element-wise ops and reductions, and Adam.

// `!(x > 0)` style guards are meant to reject NaN too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod adam;
mod conv;
mod error;
pub mod gradcheck;
mod graph;
mod norm;
mod scalar;
mod tensor;

pub use adam::{adam_step, Adam, AdamConfig, AdamState};
pub use conv::{Conv2dConfig, Conv3dConfig, ConvConfig, DeconvConfig, Padding};
pub use error::{Result, TensorError};
pub use graph::{BatchNormMode, BatchStats, Graph, Var};
pub use norm::{RunningStats, DEFAULT_BN_EPS, DEFAULT_BN_MOMENTUM};
pub use scalar::Scalar;
pub use tensor::Tensor;
