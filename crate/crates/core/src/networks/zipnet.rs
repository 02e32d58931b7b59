//! The ZipNet generator: 3D upscaling blocks, a temporal fold into channels,
//! a zipper block of staggered residual modules, and a final conv block.

use mtsr_tensor::{Scalar, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::{BatchNorm, Conv2d, Conv3d, ConvBnAct2d, Deconv3d};
use super::params::{Forward, ParamStore};
use crate::datapipe::{LayoutKind, ProbeLayout};
use crate::error::{MtsrError, Result};

/// One MTSR instance: probe layout, window size and input history length.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceConfig {
    pub layout: LayoutKind,
    pub window_side: usize,
    pub temporal_length: usize,
    /// Linear fine/coarse ratio; for mixture layouts the projected grid's mean factor.
    pub upscaling_factor: usize,
}

impl InstanceConfig {
    pub fn new(layout: LayoutKind, window_side: usize, temporal_length: usize) -> Result<Self> {
        if temporal_length == 0 {
            return Err(MtsrError::Config("temporal length S must be at least 1".into()));
        }
        let probe_layout = ProbeLayout::for_kind(layout, window_side, window_side)?;
        let upscaling_factor = probe_layout.mean_factor().ok_or_else(|| {
            MtsrError::Config(format!(
                "coarse grid {:?} is not an integral downscale of the {window_side}-cell window",
                probe_layout.coarse_dims()
            ))
        })?;
        Ok(InstanceConfig {
            layout,
            window_side,
            temporal_length,
            upscaling_factor,
        })
    }

    /// Fine cells per probe, `n_f^2`.
    pub fn coverage(&self) -> usize {
        self.upscaling_factor * self.upscaling_factor
    }

    pub fn coarse_side(&self) -> usize {
        self.window_side / self.upscaling_factor
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UpscaleStage {
    pub spatial_stride: usize,
    pub filters: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZipNetSpec {
    pub upscaling_blocks: Vec<UpscaleStage>,
    pub zipper_modules: usize,
    pub zipper_filters: usize,
    pub final_block_filters: [usize; 3],
    /// Staggered skips inside the zipper block; off gives the plain chain.
    #[serde(default = "yes")]
    pub staggered_skips: bool,
}

fn yes() -> bool {
    true
}

/// Spatial strides of the upscaling blocks for a supported factor.
pub fn upscaling_strides(n_f: usize) -> Result<Vec<usize>> {
    match n_f {
        2 => Ok(vec![2]),
        4 => Ok(vec![2, 2]),
        10 => Ok(vec![2, 5, 1]),
        _ => Err(MtsrError::Config(format!(
            "upscaling factor {n_f} is not supported (expected 2, 4 or 10)"
        ))),
    }
}

impl ZipNetSpec {
    /// Full-size generator: 64-filter upscaling blocks, 24 zipper modules,
    /// final block (128, 256, 1).
    pub fn full(n_f: usize) -> Result<Self> {
        Self::scaled(n_f, 64, 24, 64, [128, 256, 1])
    }

    pub fn scaled(
        n_f: usize,
        upscale_filters: usize,
        zipper_modules: usize,
        zipper_filters: usize,
        final_block_filters: [usize; 3],
    ) -> Result<Self> {
        let spec = ZipNetSpec {
            upscaling_blocks: upscaling_strides(n_f)?
                .into_iter()
                .map(|spatial_stride| UpscaleStage {
                    spatial_stride,
                    filters: upscale_filters,
                })
                .collect(),
            zipper_modules,
            zipper_filters,
            final_block_filters,
            staggered_skips: true,
        };
        spec.validate(n_f)?;
        Ok(spec)
    }

    pub fn validate(&self, n_f: usize) -> Result<()> {
        let product: usize = self.upscaling_blocks.iter().map(|b| b.spatial_stride).product();
        if self.upscaling_blocks.is_empty() || self.upscaling_blocks.len() > 3 {
            return Err(MtsrError::Config(format!(
                "{} upscaling blocks (expected 1 to 3)",
                self.upscaling_blocks.len()
            )));
        }
        if product != n_f {
            return Err(MtsrError::Config(format!(
                "upscaling strides multiply to {product}, instance factor is {n_f}"
            )));
        }
        if self.zipper_modules == 0 || !self.zipper_modules.is_multiple_of(2) {
            return Err(MtsrError::Config(format!(
                "zipper module count {} must be positive and even",
                self.zipper_modules
            )));
        }
        let filters = self.upscaling_blocks.iter().map(|b| b.filters);
        if self.zipper_filters == 0
            || self.final_block_filters[..2].contains(&0)
            || self.final_block_filters[2] != 1
            || filters.clone().any(|f| f == 0)
        {
            return Err(MtsrError::Config(
                "filter counts must be positive and the final block must end in 1 channel".into(),
            ));
        }
        if self.upscaling_blocks.iter().any(|b| b.spatial_stride == 0) {
            return Err(MtsrError::Config("upscaling stride 0".into()));
        }
        Ok(())
    }
}

/// Deconvolution followed by three 3x3x3 convolutions, each with BN and LReLU.
#[derive(Clone, Debug, PartialEq)]
struct UpscaleBlock {
    deconv: Deconv3d,
    deconv_bn: BatchNorm,
    convs: Vec<(Conv3d, BatchNorm)>,
}

impl UpscaleBlock {
    fn forward<T: Scalar>(&self, f: &mut Forward<'_, T>, x: Var) -> Result<Var> {
        let y = self.deconv.forward(f, x)?;
        let y = self.deconv_bn.forward(f, y)?;
        let mut y = f.g.lrelu(y, f.lrelu_alpha)?;
        for (conv, bn) in &self.convs {
            let z = conv.forward(f, y)?;
            let z = bn.forward(f, z)?;
            y = f.g.lrelu(z, f.lrelu_alpha)?;
        }
        Ok(y)
    }
}

/// `K` conv-BN-LReLU modules with staggered skips:
/// `a_0 = a_{-1} = x`, `a_i = B_i(a_{i-1}) + a_{i-2}`, output `a_K + x`.
#[derive(Clone, Debug, PartialEq)]
pub struct ZipperBlock {
    modules: Vec<ConvBnAct2d>,
    staggered_skips: bool,
}

impl ZipperBlock {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        modules: usize,
        filters: usize,
        staggered_skips: bool,
        rng: &mut R,
    ) -> Result<Self> {
        let modules = (0..modules)
            .map(|i| ConvBnAct2d::new(store, &format!("{name}.module{i}"), filters, filters, 1, rng))
            .collect::<Result<_>>()?;
        Ok(ZipperBlock {
            modules,
            staggered_skips,
        })
    }

    pub fn len(&self) -> usize {
        self.modules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modules.is_empty()
    }

    pub fn forward<T: Scalar>(&self, f: &mut Forward<'_, T>, x: Var) -> Result<Var> {
        let (mut prev2, mut prev) = (x, x);
        for m in &self.modules {
            let b = m.forward(f, prev)?;
            let a = if self.staggered_skips { f.g.add(b, prev2)? } else { b };
            prev2 = prev;
            prev = a;
        }
        if self.staggered_skips {
            Ok(f.g.add(prev, x)?)
        } else {
            Ok(prev)
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ZipNet {
    pub instance: InstanceConfig,
    pub spec: ZipNetSpec,
    upscale: Vec<UpscaleBlock>,
    /// Maps the folded `filters * S` channels onto the zipper width.
    transition: ConvBnAct2d,
    pub zipper: ZipperBlock,
    final_hidden: [ConvBnAct2d; 2],
    final_out: Conv2d,
}

/// Parameter-name prefix of the final convolutional block.
pub const FINAL_BLOCK: &str = "final";

impl ZipNet {
    /// Registers a freshly initialized generator in `store`.
    pub fn build<T: Scalar, R: Rng + ?Sized>(
        instance: InstanceConfig,
        spec: ZipNetSpec,
        store: &mut ParamStore<T>,
        rng: &mut R,
    ) -> Result<Self> {
        spec.validate(instance.upscaling_factor)?;
        if !instance.window_side.is_multiple_of(instance.upscaling_factor) {
            return Err(MtsrError::Config(format!(
                "window side {} not divisible by factor {}",
                instance.window_side, instance.upscaling_factor
            )));
        }
        let mut cin = 1;
        let mut upscale = Vec::new();
        for (i, stage) in spec.upscaling_blocks.iter().enumerate() {
            let name = format!("upscale{i}");
            let deconv = Deconv3d::new(
                store,
                &format!("{name}.deconv"),
                cin,
                stage.filters,
                stage.spatial_stride,
                rng,
            )?;
            let deconv_bn = BatchNorm::new(store, &format!("{name}.deconv_bn"), stage.filters)?;
            let convs = (0..3)
                .map(|j| {
                    Ok((
                        Conv3d::new(store, &format!("{name}.conv{j}"), stage.filters, stage.filters, rng)?,
                        BatchNorm::new(store, &format!("{name}.bn{j}"), stage.filters)?,
                    ))
                })
                .collect::<Result<Vec<_>>>()?;
            upscale.push(UpscaleBlock {
                deconv,
                deconv_bn,
                convs,
            });
            cin = stage.filters;
        }
        let folded = cin * instance.temporal_length;
        let transition = ConvBnAct2d::new(store, "transition", folded, spec.zipper_filters, 1, rng)?;
        let zipper = ZipperBlock::new(
            store,
            "zipper",
            spec.zipper_modules,
            spec.zipper_filters,
            spec.staggered_skips,
            rng,
        )?;
        let [f1, f2, f3] = spec.final_block_filters;
        let final_hidden = [
            ConvBnAct2d::new(store, &format!("{FINAL_BLOCK}.0"), spec.zipper_filters, f1, 1, rng)?,
            ConvBnAct2d::new(store, &format!("{FINAL_BLOCK}.1"), f1, f2, 1, rng)?,
        ];
        let final_out = Conv2d::new(store, &format!("{FINAL_BLOCK}.2"), f2, f3, 3, 1, true, rng)?;
        Ok(ZipNet {
            instance,
            spec,
            upscale,
            transition,
            zipper,
            final_hidden,
            final_out,
        })
    }

    pub fn upscaling_block_count(&self) -> usize {
        self.upscale.len()
    }

    /// `[N, 1, S, h, w]` normalized coarse sequences to `[N, 1, h n_f, w n_f]`.
    pub fn forward<T: Scalar>(&self, f: &mut Forward<'_, T>, x: Var) -> Result<Var> {
        let shape = f.g.shape(x).to_vec();
        let side = self.instance.coarse_side();
        let s = self.instance.temporal_length;
        if shape.len() != 5 || shape[1] != 1 || shape[2] != s || shape[3] != side || shape[4] != side {
            return Err(MtsrError::Dimension(format!(
                "generator expects [N, 1, {s}, {side}, {side}], got {shape:?}"
            )));
        }
        let mut y = x;
        for block in &self.upscale {
            y = block.forward(f, y)?;
        }
        let ys = f.g.shape(y).to_vec();
        let y = f.g.reshape(y, &[ys[0], ys[1] * ys[2], ys[3], ys[4]])?;
        let y = self.transition.forward(f, y)?;
        let y = self.zipper.forward(f, y)?;
        let y = self.final_hidden[0].forward(f, y)?;
        let y = self.final_hidden[1].forward(f, y)?;
        self.final_out.forward(f, y)
    }
}
