//! Generator, discriminator and SRCNN over a named parameter store.

mod discriminator;
mod layers;
mod params;
mod srcnn;
mod zipnet;

pub use discriminator::{ConvBlockSpec, Discriminator, DiscriminatorSpec};
pub use layers::{BatchNorm, Conv2d, Conv3d, ConvBnAct2d, Deconv3d};
pub use params::{collect_grads, he_init, BnUpdate, Forward, Mode, ParamId, ParamKind, ParamStore};
pub use srcnn::{Srcnn, SrcnnSpec};
pub use zipnet::{upscaling_strides, InstanceConfig, UpscaleStage, ZipNet, ZipNetSpec, ZipperBlock, FINAL_BLOCK};
