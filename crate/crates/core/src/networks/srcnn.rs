//! SRCNN: three convolutions (9x9, 1x1, 5x5) on a bicubic-upsampled frame.

use mtsr_tensor::{Scalar, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::Conv2d;
use super::params::{Forward, ParamStore};
use crate::error::{MtsrError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SrcnnSpec {
    pub kernels: [usize; 3],
    pub filters: [usize; 2],
}

impl Default for SrcnnSpec {
    fn default() -> Self {
        SrcnnSpec {
            kernels: [9, 1, 5],
            filters: [64, 32],
        }
    }
}

impl SrcnnSpec {
    pub fn param_count(&self) -> usize {
        let [k1, k2, k3] = self.kernels;
        let [f1, f2] = self.filters;
        (k1 * k1 + 1) * f1 + (k2 * k2 * f1 + 1) * f2 + k3 * k3 * f2 + 1
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Srcnn {
    pub spec: SrcnnSpec,
    convs: [Conv2d; 3],
}

impl Srcnn {
    pub fn build<T: Scalar, R: Rng + ?Sized>(spec: SrcnnSpec, store: &mut ParamStore<T>, rng: &mut R) -> Result<Self> {
        let [k1, k2, k3] = spec.kernels;
        let [f1, f2] = spec.filters;
        if spec.kernels.contains(&0) || spec.filters.contains(&0) {
            return Err(MtsrError::Config("SRCNN kernels and filters must be positive".into()));
        }
        Ok(Srcnn {
            spec,
            convs: [
                Conv2d::new(store, "conv0", 1, f1, k1, 1, true, rng)?,
                Conv2d::new(store, "conv1", f1, f2, k2, 1, true, rng)?,
                Conv2d::new(store, "conv2", f2, 1, k3, 1, true, rng)?,
            ],
        })
    }

    /// `[N, 1, H, W]` pre-upsampled frames to `[N, 1, H, W]`.
    pub fn forward<T: Scalar>(&self, f: &mut Forward<'_, T>, x: Var) -> Result<Var> {
        let y = self.convs[0].forward(f, x)?;
        let y = f.g.relu(y);
        let y = self.convs[1].forward(f, y)?;
        let y = f.g.relu(y);
        self.convs[2].forward(f, y)
    }
}
