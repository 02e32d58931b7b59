//! VGG-style discriminator: six conv blocks whose width doubles every other
//! block, global average pooling, one affine unit and a sigmoid.

use mtsr_tensor::{Scalar, Tensor, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::ConvBnAct2d;
use super::params::{he_init, Forward, ParamId, ParamKind, ParamStore};
use crate::error::{MtsrError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvBlockSpec {
    pub filters: usize,
    pub stride: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscriminatorSpec {
    pub input_side: usize,
    pub blocks: Vec<ConvBlockSpec>,
}

impl DiscriminatorSpec {
    /// Filters `(f, f, 2f, 2f, 4f, 4f)`; stride 2 on the second block of each pair.
    pub fn vgg(input_side: usize, base_filters: usize) -> Self {
        let blocks = (0..6)
            .map(|i| ConvBlockSpec {
                filters: base_filters << (i / 2),
                stride: if i % 2 == 1 { 2 } else { 1 },
            })
            .collect();
        DiscriminatorSpec { input_side, blocks }
    }

    pub fn full(input_side: usize) -> Self {
        Self::vgg(input_side, 64)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Discriminator {
    pub spec: DiscriminatorSpec,
    blocks: Vec<ConvBnAct2d>,
    head_weight: ParamId,
    head_bias: ParamId,
}

impl Discriminator {
    pub fn build<T: Scalar, R: Rng + ?Sized>(
        spec: DiscriminatorSpec,
        store: &mut ParamStore<T>,
        rng: &mut R,
    ) -> Result<Self> {
        if spec.blocks.is_empty() || spec.blocks.iter().any(|b| b.filters == 0 || b.stride == 0) {
            return Err(MtsrError::Config(
                "discriminator blocks need positive filters and strides".into(),
            ));
        }
        let mut cin = 1;
        let mut blocks = Vec::new();
        for (i, b) in spec.blocks.iter().enumerate() {
            blocks.push(ConvBnAct2d::new(
                store,
                &format!("block{i}"),
                cin,
                b.filters,
                b.stride,
                rng,
            )?);
            cin = b.filters;
        }
        let head_weight = store.add("head.weight", he_init(&[1, cin], cin, rng)?, ParamKind::Weight);
        let head_bias = store.add("head.bias", Tensor::zeros(&[1])?, ParamKind::Weight);
        Ok(Discriminator {
            spec,
            blocks,
            head_weight,
            head_bias,
        })
    }

    /// Pre-sigmoid score `[N, 1]` of frames `[N, 1, H, W]`.
    pub fn logits<T: Scalar>(&self, f: &mut Forward<'_, T>, x: Var) -> Result<Var> {
        let shape = f.g.shape(x).to_vec();
        let side = self.spec.input_side;
        if shape.len() != 4 || shape[1] != 1 || shape[2] != side || shape[3] != side {
            return Err(MtsrError::Dimension(format!(
                "discriminator expects [N, 1, {side}, {side}], got {shape:?}"
            )));
        }
        let mut y = x;
        for b in &self.blocks {
            y = b.forward(f, y)?;
        }
        let pooled = f.g.global_avg_pool(y)?;
        Ok(f.g.linear(pooled, f.var(self.head_weight), f.var(self.head_bias))?)
    }

    /// Probability `[N, 1]` that each frame is real.
    pub fn forward<T: Scalar>(&self, f: &mut Forward<'_, T>, x: Var) -> Result<Var> {
        let z = self.logits(f, x)?;
        Ok(f.g.sigmoid(z))
    }
}
