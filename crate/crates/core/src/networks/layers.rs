//! Parameterized layers over a [`ParamStore`].

use mtsr_tensor::{BatchNormMode, Conv2dConfig, Conv3dConfig, DeconvConfig, Scalar, Tensor, Var, DEFAULT_BN_EPS};
use rand::Rng;

use super::params::{he_init, BnUpdate, Forward, Mode, ParamId, ParamKind, ParamStore};
use crate::error::Result;

#[derive(Clone, Debug, PartialEq)]
pub struct Conv2d {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub stride: usize,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        cin: usize,
        cout: usize,
        k: usize,
        stride: usize,
        bias: bool,
        rng: &mut R,
    ) -> Result<Self> {
        let weight = store.add(
            format!("{name}.weight"),
            he_init(&[cout, cin, k, k], cin * k * k, rng)?,
            ParamKind::Weight,
        );
        let bias = if bias {
            Some(store.add(format!("{name}.bias"), Tensor::zeros(&[cout])?, ParamKind::Weight))
        } else {
            None
        };
        Ok(Conv2d { weight, bias, stride })
    }

    pub fn forward<T: Scalar>(&self, f: &mut Forward<'_, T>, x: Var) -> Result<Var> {
        let cfg = Conv2dConfig::same().with_stride([self.stride; 2]);
        let mut y = f.g.conv2d(x, f.var(self.weight), cfg)?;
        if let Some(b) = self.bias {
            y = f.g.channel_bias(y, f.var(b))?;
        }
        Ok(y)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Conv3d {
    pub weight: ParamId,
}

impl Conv3d {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        cin: usize,
        cout: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let weight = store.add(
            format!("{name}.weight"),
            he_init(&[cout, cin, 3, 3, 3], cin * 27, rng)?,
            ParamKind::Weight,
        );
        Ok(Conv3d { weight })
    }

    pub fn forward<T: Scalar>(&self, f: &mut Forward<'_, T>, x: Var) -> Result<Var> {
        Ok(f.g.conv3d(x, f.var(self.weight), Conv3dConfig::same())?)
    }
}

/// Transposed 3D convolution upscaling the two spatial axes by `stride`,
/// keeping the temporal axis.
#[derive(Clone, Debug, PartialEq)]
pub struct Deconv3d {
    pub weight: ParamId,
    pub cfg: DeconvConfig,
}

impl Deconv3d {
    /// Spatial kernel side: `2 * stride - 1` (at least 3), so every output
    /// cell receives taps from the input.
    pub fn kernel_side(stride: usize) -> usize {
        (2 * stride).saturating_sub(1).max(3)
    }

    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        cin: usize,
        cout: usize,
        stride: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let k = Self::kernel_side(stride);
        let fan_in = (cin * 3 * k * k / (stride * stride)).max(1);
        let weight = store.add(
            format!("{name}.weight"),
            he_init(&[cin, cout, 3, k, k], fan_in, rng)?,
            ParamKind::Weight,
        );
        Ok(Deconv3d {
            weight,
            cfg: DeconvConfig::upscale([1, stride, stride], [3, k, k]),
        })
    }

    pub fn forward<T: Scalar>(&self, f: &mut Forward<'_, T>, x: Var) -> Result<Var> {
        Ok(f.g.deconv3d(x, f.var(self.weight), self.cfg)?)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
}

impl BatchNorm {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, name: &str, channels: usize) -> Result<Self> {
        Ok(BatchNorm {
            gamma: store.add(format!("{name}.gamma"), Tensor::ones(&[channels])?, ParamKind::Weight),
            beta: store.add(format!("{name}.beta"), Tensor::zeros(&[channels])?, ParamKind::Weight),
            running_mean: store.add(
                format!("{name}.running_mean"),
                Tensor::zeros(&[channels])?,
                ParamKind::Buffer,
            ),
            running_var: store.add(
                format!("{name}.running_var"),
                Tensor::ones(&[channels])?,
                ParamKind::Buffer,
            ),
        })
    }

    pub fn forward<T: Scalar>(&self, f: &mut Forward<'_, T>, x: Var) -> Result<Var> {
        let eps = T::from_f64_lossy(DEFAULT_BN_EPS);
        let (gamma, beta) = (f.var(self.gamma), f.var(self.beta));
        match f.mode {
            Mode::Train => {
                let (y, stats) = f.g.batchnorm(x, gamma, beta, BatchNormMode::Train, eps)?;
                if let Some(stats) = stats {
                    f.push_bn(BnUpdate {
                        mean: self.running_mean,
                        var: self.running_var,
                        stats,
                    });
                }
                Ok(y)
            }
            Mode::Infer => {
                let store = f.store;
                let mode = BatchNormMode::Infer {
                    mean: store.get(self.running_mean).data(),
                    var: store.get(self.running_var).data(),
                };
                Ok(f.g.batchnorm(x, gamma, beta, mode, eps)?.0)
            }
        }
    }
}

/// 2D convolution, batch norm, LReLU.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvBnAct2d {
    pub conv: Conv2d,
    pub bn: BatchNorm,
}

impl ConvBnAct2d {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        cin: usize,
        cout: usize,
        stride: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(ConvBnAct2d {
            conv: Conv2d::new(store, &format!("{name}.conv"), cin, cout, 3, stride, false, rng)?,
            bn: BatchNorm::new(store, &format!("{name}.bn"), cout)?,
        })
    }

    pub fn forward<T: Scalar>(&self, f: &mut Forward<'_, T>, x: Var) -> Result<Var> {
        let y = self.conv.forward(f, x)?;
        let y = self.bn.forward(f, y)?;
        Ok(f.g.lrelu(y, f.lrelu_alpha)?)
    }
}
