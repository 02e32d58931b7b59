//! Mobile traffic super-resolution: reconstructs fine-grained city traffic
//! maps from coarse probe aggregates with the ZipNet generator.

// `!(x > 0)` style guards are meant to reject NaN too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod datapipe;
mod error;
pub mod evaluation;
pub mod networks;
pub mod training;

pub use error::{MtsrError, Result};
