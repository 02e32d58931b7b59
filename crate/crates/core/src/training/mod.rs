//! Losses, generator pre-training, adversarial training and checkpoints.

mod checkpoint;
mod gan;
mod loss;
mod srcnn_fit;

pub use checkpoint::{load_checkpoint, load_checkpoint_for, save_checkpoint, Checkpoint, MAGIC, VERSION};
pub use gan::{
    write_history_csv, EpochLoss, GanModel, GanReport, LossVariant, Phase, PretrainReport, TrainConfig, Trainer,
};
pub use loss::{d_loss, g_loss, g_loss_sigma, mse_loss, per_sample_sq_error, LOG_CLIP};
pub use srcnn_fit::{srcnn_input, SrcnnModel};
