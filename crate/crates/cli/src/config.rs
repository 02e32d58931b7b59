//! Run configuration: TOML file values, overridden by command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use mtsr::datapipe::{DatasetSpec, LayoutKind, SplitSpec, SynthConfig};
use mtsr::evaluation::MetricConfig;
use mtsr::networks::{DiscriminatorSpec, InstanceConfig, ZipNetSpec};
use mtsr::training::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetFormat {
    /// `time_index,row,col,traffic_mb` with a `.meta.toml` sidecar.
    #[default]
    Grid,
    /// Tab-separated Telecom Italia export; the sidecar is still required.
    TelecomItalia,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub format: DatasetFormat,
    pub layout: LayoutKind,
    pub temporal_length: usize,
    pub window_side: usize,
    pub offset: usize,
    pub split: SplitSpec,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            format: DatasetFormat::Grid,
            layout: LayoutKind::Uniform(2),
            temporal_length: 6,
            window_side: 80,
            offset: 1,
            split: SplitSpec::default(),
        }
    }
}

impl DataConfig {
    pub fn dataset_spec(&self) -> DatasetSpec {
        DatasetSpec {
            layout: self.layout,
            temporal_length: self.temporal_length,
            window_side: self.window_side,
            offset: self.offset,
            split: self.split,
        }
    }
}

/// Network widths. Defaults are the full-size networks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub upscale_filters: usize,
    pub zipper_modules: usize,
    pub zipper_filters: usize,
    pub final_block_filters: [usize; 3],
    pub staggered_skips: bool,
    pub discriminator_filters: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            upscale_filters: 64,
            zipper_modules: 24,
            zipper_filters: 64,
            final_block_filters: [128, 256, 1],
            staggered_skips: true,
            discriminator_filters: 64,
        }
    }
}

impl ModelConfig {
    pub fn generator(&self, instance: &InstanceConfig) -> mtsr::Result<ZipNetSpec> {
        let mut spec = ZipNetSpec::scaled(
            instance.upscaling_factor,
            self.upscale_filters,
            self.zipper_modules,
            self.zipper_filters,
            self.final_block_filters,
        )?;
        spec.staggered_skips = self.staggered_skips;
        Ok(spec)
    }

    pub fn discriminator(&self, instance: &InstanceConfig) -> DiscriminatorSpec {
        DiscriminatorSpec::vgg(instance.window_side, self.discriminator_filters)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluateConfig {
    /// Any of `uniform`, `bicubic`, `srcnn`, `zipnet`, `zipnet-mse`, `oracle`.
    pub methods: Vec<String>,
    /// Layouts to score; learned methods only run on the layout they were trained for.
    pub layouts: Vec<LayoutKind>,
    pub metrics: MetricConfig,
    pub srcnn_epochs: usize,
    pub srcnn_learning_rate: f64,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        EvaluateConfig {
            methods: ["uniform", "bicubic", "zipnet"].map(String::from).to_vec(),
            layouts: Vec::new(),
            metrics: MetricConfig::default(),
            srcnn_epochs: 20,
            srcnn_learning_rate: 1e-3,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InferConfig {
    /// First predicted snapshot; the first test snapshot when unset.
    pub time: Option<usize>,
    pub frames: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmitConfig {
    pub csv: bool,
    pub pgm: bool,
}

impl Default for EmitConfig {
    fn default() -> Self {
        EmitConfig { csv: true, pgm: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Overrides the nested `synth.seed` and `train.seed` when set.
    pub seed: Option<u64>,
    pub out: PathBuf,
    pub dataset: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    /// Pretrain-only generator reported as `zipnet-mse`.
    pub mse_checkpoint: Option<PathBuf>,
    /// Stop after pretraining: the MSE-only generator.
    pub skip_gan: bool,
    pub synth: SynthConfig,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub evaluate: EvaluateConfig,
    pub infer: InferConfig,
    pub emit: EmitConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: None,
            out: PathBuf::from("out"),
            dataset: None,
            checkpoint: None,
            mse_checkpoint: None,
            skip_gan: false,
            synth: SynthConfig::default(),
            data: DataConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            evaluate: EvaluateConfig::default(),
            infer: InferConfig { time: None, frames: 1 },
            emit: EmitConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    /// Propagates the top-level seed into every seeded component.
    pub fn apply_seed(&mut self) {
        if let Some(s) = self.seed {
            self.synth.seed = s;
            self.train.seed = s;
        }
    }

    pub fn dataset_path(&self) -> Result<&Path, CliError> {
        let p = self
            .dataset
            .as_deref()
            .ok_or_else(|| CliError::Usage("no dataset given (--dataset or `dataset` in the config)".into()))?;
        require_file(p)?;
        Ok(p)
    }

    pub fn checkpoint_path(&self) -> Result<&Path, CliError> {
        let p = self.checkpoint.as_deref().ok_or_else(|| {
            CliError::Usage("no checkpoint given (--checkpoint or `checkpoint` in the config)".into())
        })?;
        require_file(p)?;
        Ok(p)
    }
}

pub fn require_file(p: &Path) -> Result<(), CliError> {
    if p.is_file() {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "{} does not exist or is not a file",
            p.display()
        )))
    }
}
