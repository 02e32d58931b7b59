//! Command-line front end: `synth`, `train`, `infer`, `evaluate` and `saliency`.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub mod commands;
pub mod config;
mod error;
pub mod pgm;

pub use config::RunConfig;
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "mtsr", version, about = "Mobile traffic super-resolution")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Flags every command accepts.
#[derive(Clone, Debug, Default, Args)]
pub struct Common {
    /// TOML run configuration; flags take precedence over its values.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, Args)]
pub struct Inputs {
    /// Grid CSV with a `.meta.toml` sidecar.
    #[arg(long, value_name = "PATH")]
    pub dataset: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic city series.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        rows: Option<usize>,
        #[arg(long)]
        cols: Option<usize>,
        #[arg(long)]
        frames: Option<usize>,
        #[arg(long)]
        hotspots: Option<usize>,
    },
    /// Pretrain the generator on the MSE, then train adversarially.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "PATH")]
        dataset: Option<PathBuf>,
        /// Stop after pretraining.
        #[arg(long)]
        skip_gan: bool,
        #[arg(long)]
        pretrain_epochs: Option<usize>,
        #[arg(long)]
        gan_epochs: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        batch_size: Option<usize>,
    },
    /// Reconstruct full-grid frames from coarse measurements.
    Infer {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        inputs: Inputs,
        /// First snapshot to predict.
        #[arg(long)]
        time: Option<usize>,
        #[arg(long)]
        frames: Option<usize>,
        /// Also write 16-bit PGM heatmaps.
        #[arg(long)]
        pgm: bool,
    },
    /// Compare methods on the test split.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        inputs: Inputs,
        /// Pretrain-only checkpoint for the `zipnet-mse` method.
        #[arg(long, value_name = "PATH")]
        mse_checkpoint: Option<PathBuf>,
        /// Comma-separated method names.
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<String>>,
    },
    /// Input-gradient magnitude of each of the S input frames.
    Saliency {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        inputs: Inputs,
    },
}

fn set<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

fn base(common: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if common.seed.is_some() {
        cfg.seed = common.seed;
    }
    set(&mut cfg.out, common.out.clone());
    Ok(cfg)
}

fn apply_inputs(cfg: &mut RunConfig, inputs: &Inputs) {
    if inputs.dataset.is_some() {
        cfg.dataset = inputs.dataset.clone();
    }
    if inputs.checkpoint.is_some() {
        cfg.checkpoint = inputs.checkpoint.clone();
    }
}

impl Command {
    /// Config file, then flags on top, then seed propagation.
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match self {
            Command::Synth {
                common,
                rows,
                cols,
                frames,
                hotspots,
            } => {
                let mut cfg = base(common)?;
                set(&mut cfg.synth.rows, *rows);
                set(&mut cfg.synth.cols, *cols);
                set(&mut cfg.synth.frames, *frames);
                set(&mut cfg.synth.hotspots, *hotspots);
                cfg
            }
            Command::Train {
                common,
                dataset,
                skip_gan,
                pretrain_epochs,
                gan_epochs,
                learning_rate,
                batch_size,
            } => {
                let mut cfg = base(common)?;
                if dataset.is_some() {
                    cfg.dataset = dataset.clone();
                }
                cfg.skip_gan |= *skip_gan;
                set(&mut cfg.train.pretrain_epochs, *pretrain_epochs);
                set(&mut cfg.train.gan_epochs, *gan_epochs);
                set(&mut cfg.train.learning_rate, *learning_rate);
                set(&mut cfg.train.batch_size, *batch_size);
                cfg
            }
            Command::Infer {
                common,
                inputs,
                time,
                frames,
                pgm,
            } => {
                let mut cfg = base(common)?;
                apply_inputs(&mut cfg, inputs);
                if time.is_some() {
                    cfg.infer.time = *time;
                }
                set(&mut cfg.infer.frames, *frames);
                cfg.emit.pgm |= *pgm;
                cfg
            }
            Command::Evaluate {
                common,
                inputs,
                mse_checkpoint,
                methods,
            } => {
                let mut cfg = base(common)?;
                apply_inputs(&mut cfg, inputs);
                if mse_checkpoint.is_some() {
                    cfg.mse_checkpoint = mse_checkpoint.clone();
                }
                set(&mut cfg.evaluate.methods, methods.clone());
                cfg
            }
            Command::Saliency { common, inputs } => {
                let mut cfg = base(common)?;
                apply_inputs(&mut cfg, inputs);
                cfg
            }
        };
        cfg.apply_seed();
        Ok(cfg)
    }

    pub fn run(&self) -> Result<(), CliError> {
        let cfg = self.resolve()?;
        match self {
            Command::Synth { .. } => commands::cmd_synth(&cfg).map(drop),
            Command::Train { .. } => commands::cmd_train(&cfg).map(drop),
            Command::Infer { .. } => commands::cmd_infer(&cfg).map(drop),
            Command::Evaluate { .. } => commands::cmd_evaluate(&cfg).map(drop),
            Command::Saliency { .. } => commands::cmd_saliency(&cfg).map(drop),
        }
    }
}
