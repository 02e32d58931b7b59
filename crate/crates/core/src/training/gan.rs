//! Generator pre-training on the MSE and the alternating adversarial loop.

use std::fmt;
use std::io::Write;
use std::path::Path;

use mtsr_tensor::{Adam, AdamConfig, Graph, Scalar, Tensor, DEFAULT_BN_MOMENTUM};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{d_loss, g_loss, g_loss_sigma, mse_loss, LOG_CLIP};
use crate::datapipe::{stack_batch, NormStats, PairSet, SamplePair};
use crate::error::{MtsrError, Result};
use crate::networks::{
    collect_grads, Discriminator, DiscriminatorSpec, Forward, InstanceConfig, Mode, ParamStore, ZipNet, ZipNetSpec,
};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "variant")]
pub enum LossVariant {
    /// `(1 - 2 log D(G)) ||truth - pred||^2`.
    Weighted,
    /// `||truth - pred||^2 - 2 sigma^2 log D(G)`; sigma^2 has no default.
    Additive { sigma_sq: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Step size for the adversarial phase; `None` keeps `learning_rate`.
    pub gan_learning_rate: Option<f64>,
    pub n_g: usize,
    pub n_d: usize,
    pub pretrain_epochs: usize,
    pub gan_epochs: usize,
    pub loss_variant: LossVariant,
    pub log_clip: f64,
    pub seed: u64,
    /// Caps minibatches per pass; `None` sweeps the whole training split.
    pub batches_per_epoch: Option<usize>,
    /// Pretraining stops once the epoch loss improves by less than this
    /// fraction for `patience` consecutive epochs.
    pub convergence_tol: f64,
    pub patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 16,
            learning_rate: 1e-4,
            gan_learning_rate: None,
            n_g: 1,
            n_d: 1,
            pretrain_epochs: 50,
            gan_epochs: 50,
            loss_variant: LossVariant::Weighted,
            log_clip: LOG_CLIP,
            seed: 0,
            batches_per_epoch: None,
            convergence_tol: 1e-3,
            patience: 5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(MtsrError::Config(m));
        if self.batch_size == 0 || self.n_g == 0 || self.n_d == 0 {
            return bad("batch_size, n_g and n_d must be positive".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate {} must be positive", self.learning_rate));
        }
        if let Some(lr) = self.gan_learning_rate {
            if !(lr > 0.0 && lr.is_finite()) {
                return bad(format!("gan learning rate {lr} must be positive"));
            }
        }
        if !(self.log_clip > 0.0 && self.log_clip <= 1e-3) {
            return bad(format!("log_clip {} outside (0, 1e-3]", self.log_clip));
        }
        if let LossVariant::Additive { sigma_sq } = self.loss_variant {
            if !(sigma_sq > 0.0) {
                return bad(format!("sigma_sq {sigma_sq} must be positive"));
            }
        }
        if self.batches_per_epoch == Some(0) || self.patience == 0 || !(self.convergence_tol >= 0.0) {
            return bad("batches_per_epoch and patience must be positive, convergence_tol non-negative".into());
        }
        Ok(())
    }
}

/// Generator and discriminator with their parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct GanModel<T> {
    pub generator: ZipNet,
    pub g_params: ParamStore<T>,
    pub discriminator: Discriminator,
    pub d_params: ParamStore<T>,
}

impl<T: Scalar> GanModel<T> {
    /// Fresh weights drawn from a generator seeded with `seed`.
    pub fn build(instance: InstanceConfig, g_spec: ZipNetSpec, d_spec: DiscriminatorSpec, seed: u64) -> Result<Self> {
        if d_spec.input_side != instance.window_side {
            return Err(MtsrError::Config(format!(
                "discriminator input {} differs from window side {}",
                d_spec.input_side, instance.window_side
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g_params = ParamStore::new();
        let generator = ZipNet::build(instance, g_spec, &mut g_params, &mut rng)?;
        let mut d_params = ParamStore::new();
        let discriminator = Discriminator::build(d_spec, &mut d_params, &mut rng)?;
        Ok(GanModel {
            generator,
            g_params,
            discriminator,
            d_params,
        })
    }

    pub fn instance(&self) -> &InstanceConfig {
        &self.generator.instance
    }

    /// Inference-mode generator output for normalized inputs `[N,1,S,h,w]`.
    pub fn generate(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let x = g.constant(input.clone());
        let mut f = Forward::new(&mut g, &self.g_params, Mode::Infer, false);
        let y = self.generator.forward(&mut f, x)?;
        Ok(g.value(y).clone())
    }

    /// Inference-mode discriminator probabilities for normalized frames `[N,1,H,W]`.
    pub fn discriminate(&self, frames: &Tensor<T>) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let x = g.constant(frames.clone());
        let mut f = Forward::new(&mut g, &self.d_params, Mode::Infer, false);
        let p = self.discriminator.forward(&mut f, x)?;
        Ok(g.value(p).to_f64_vec())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    D,
    G,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::D => "D",
            Phase::G => "G",
        })
    }
}

/// Mean loss of one sub-epoch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochLoss {
    pub epoch: usize,
    pub phase: Phase,
    pub loss: f64,
}

/// `epoch,phase,loss` rows with 17 significant digits.
pub fn write_history_csv(path: &Path, rows: &[EpochLoss]) -> Result<()> {
    let io = |e| MtsrError::io(path, e);
    let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    writeln!(out, "epoch,phase,loss").map_err(io)?;
    for r in rows {
        writeln!(out, "{},{},{}", r.epoch, r.phase, crate::datapipe::fmt_f64(r.loss)).map_err(io)?;
    }
    out.flush().map_err(io)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PretrainReport {
    /// Epoch-mean MSE per completed epoch.
    pub losses: Vec<f64>,
    pub converged: bool,
    /// The loss rose at least once within the first 10 epochs.
    pub descent_warning: bool,
}

impl PretrainReport {
    pub fn history(&self) -> Vec<EpochLoss> {
        self.losses
            .iter()
            .enumerate()
            .map(|(epoch, &loss)| EpochLoss {
                epoch,
                phase: Phase::G,
                loss,
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GanReport {
    pub history: Vec<EpochLoss>,
    /// Smallest and largest discriminator output seen during training.
    pub d_output_range: (f64, f64),
}

/// Optimizer and sampling state carried across phases of one run.
pub struct Trainer<T> {
    pub config: TrainConfig,
    rng: ChaCha8Rng,
    g_opt: Adam<T>,
    d_opt: Adam<T>,
}

fn weight_lens<T: Scalar>(store: &ParamStore<T>) -> Vec<usize> {
    store.weight_ids().iter().map(|&id| store.get(id).numel()).collect()
}

fn apply_adam<T: Scalar>(store: &mut ParamStore<T>, opt: &mut Adam<T>, grads: Vec<Option<Tensor<T>>>) {
    let grads: Vec<Vec<T>> = store
        .ids()
        .zip(grads)
        .filter(|(id, _)| store.kind(*id) == crate::networks::ParamKind::Weight)
        .map(|(id, g)| g.map_or_else(|| vec![T::zero(); store.get(id).numel()], |g| g.into_data()))
        .collect();
    opt.step(
        store
            .weights_mut()
            .map(|t| t.data_mut())
            .zip(grads.iter().map(|g| g.as_slice())),
    );
}

fn finite(loss: f64, what: &str, epoch: usize) -> Result<f64> {
    if loss.is_finite() {
        Ok(loss)
    } else {
        Err(MtsrError::Numeric(format!(
            "{what} loss became {loss} in epoch {epoch}"
        )))
    }
}

impl<T: Scalar> Trainer<T> {
    pub fn new(config: TrainConfig, model: &GanModel<T>) -> Result<Self> {
        config.validate()?;
        let adam = AdamConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(1);
        Ok(Trainer {
            g_opt: Adam::new(config.learning_rate, adam, weight_lens(&model.g_params)),
            d_opt: Adam::new(config.learning_rate, adam, weight_lens(&model.d_params)),
            rng,
            config,
        })
    }

    /// Shuffled minibatches for one pass over `data`.
    fn batches(&mut self, data: &PairSet) -> Result<Vec<Vec<usize>>> {
        let m = self.config.batch_size;
        if data.len() < m {
            return Err(MtsrError::Config(format!(
                "training split has {} pairs, fewer than batch size {m}",
                data.len()
            )));
        }
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut self.rng);
        let mut batches: Vec<Vec<usize>> = order.chunks(m).map(|c| c.to_vec()).collect();
        if let Some(cap) = self.config.batches_per_epoch {
            batches.truncate(cap);
        }
        Ok(batches)
    }

    /// Adam descent on the MSE until the epoch loss stalls or the epoch cap.
    pub fn pretrain(&mut self, model: &mut GanModel<T>, data: &PairSet, norm: &NormStats) -> Result<PretrainReport> {
        if data.is_empty() {
            return Err(MtsrError::Empty("training split"));
        }
        let mut losses: Vec<f64> = Vec::new();
        let mut stalled = 0;
        let mut converged = false;
        for epoch in 0..self.config.pretrain_epochs {
            let mut total = 0.0;
            let batches = self.batches(data)?;
            for idx in &batches {
                let (x, y) = load(data, idx, norm)?;
                let mut g = Graph::new();
                let xv = g.constant(x);
                let yv = g.constant(y);
                let mut f = Forward::new(&mut g, &model.g_params, Mode::Train, true);
                let pred = model.generator.forward(&mut f, xv)?;
                let (vars, bn) = f.finish();
                let loss = mse_loss(&mut g, pred, yv)?;
                total += finite(g.value(loss).item().to_f64_lossy(), "pretraining", epoch)?;
                g.backward(loss)?;
                let grads = collect_grads(&g, &model.g_params, &vars);
                apply_adam(&mut model.g_params, &mut self.g_opt, grads);
                model.g_params.update_running(&bn, DEFAULT_BN_MOMENTUM);
            }
            let mean = total / batches.len() as f64;
            log::info!("pretrain epoch {epoch}: mse {mean:.6e}");
            if let Some(&prev) = losses.last() {
                if prev - mean < self.config.convergence_tol * prev.abs() {
                    stalled += 1;
                } else {
                    stalled = 0;
                }
            }
            losses.push(mean);
            if stalled >= self.config.patience {
                converged = true;
                break;
            }
        }
        let head = &losses[..losses.len().min(10)];
        let descent_warning = head.windows(2).any(|w| w[1] > w[0]);
        if descent_warning {
            log::warn!("pretraining loss increased within the first 10 epochs");
        }
        Ok(PretrainReport {
            losses,
            converged,
            descent_warning,
        })
    }

    /// Alternates `n_d` discriminator passes (ascent on the discriminator
    /// objective) with `n_g` generator passes per outer epoch.
    pub fn train_gan(&mut self, model: &mut GanModel<T>, data: &PairSet, norm: &NormStats) -> Result<GanReport> {
        let mut history = Vec::new();
        let mut range = (f64::INFINITY, f64::NEG_INFINITY);
        if let Some(lr) = self.config.gan_learning_rate {
            // A new step size starts both optimizers from fresh moments.
            let adam = AdamConfig::default();
            self.g_opt = Adam::new(lr, adam, weight_lens(&model.g_params));
            self.d_opt = Adam::new(lr, adam, weight_lens(&model.d_params));
        }
        for epoch in 0..self.config.gan_epochs {
            for _ in 0..self.config.n_d {
                let loss = self.d_pass(model, data, norm, epoch, &mut range)?;
                history.push(EpochLoss {
                    epoch,
                    phase: Phase::D,
                    loss,
                });
            }
            for _ in 0..self.config.n_g {
                let loss = self.g_pass(model, data, norm, epoch, &mut range)?;
                history.push(EpochLoss {
                    epoch,
                    phase: Phase::G,
                    loss,
                });
            }
            log::info!(
                "gan epoch {epoch}: D {:.6e}, G {:.6e}",
                history[history.len() - 1 - self.config.n_g].loss,
                history[history.len() - 1].loss
            );
        }
        Ok(GanReport {
            history,
            d_output_range: range,
        })
    }

    fn d_pass(
        &mut self,
        model: &mut GanModel<T>,
        data: &PairSet,
        norm: &NormStats,
        epoch: usize,
        range: &mut (f64, f64),
    ) -> Result<f64> {
        let batches = self.batches(data)?;
        let mut total = 0.0;
        for idx in &batches {
            let (x, y) = load(data, idx, norm)?;
            let fake = model.generate(&x)?;
            let mut g = Graph::new();
            let real_v = g.constant(y);
            let fake_v = g.constant(fake);
            let mut f = Forward::new(&mut g, &model.d_params, Mode::Train, true);
            let d_real = model.discriminator.forward(&mut f, real_v)?;
            let d_fake = model.discriminator.forward(&mut f, fake_v)?;
            let (vars, bn) = f.finish();
            track(range, &g.value(d_real).to_f64_vec());
            track(range, &g.value(d_fake).to_f64_vec());
            let objective = d_loss(&mut g, d_real, d_fake, self.config.log_clip)?;
            total += finite(g.value(objective).item().to_f64_lossy(), "discriminator", epoch)?;
            let neg = g.scale(objective, -T::one());
            g.backward(neg)?;
            let grads = collect_grads(&g, &model.d_params, &vars);
            apply_adam(&mut model.d_params, &mut self.d_opt, grads);
            model.d_params.update_running(&bn, DEFAULT_BN_MOMENTUM);
        }
        Ok(total / batches.len() as f64)
    }

    fn g_pass(
        &mut self,
        model: &mut GanModel<T>,
        data: &PairSet,
        norm: &NormStats,
        epoch: usize,
        range: &mut (f64, f64),
    ) -> Result<f64> {
        let batches = self.batches(data)?;
        let mut total = 0.0;
        for idx in &batches {
            let (x, y) = load(data, idx, norm)?;
            let mut g = Graph::new();
            let xv = g.constant(x);
            let yv = g.constant(y);
            let mut fg = Forward::new(&mut g, &model.g_params, Mode::Train, true);
            let pred = model.generator.forward(&mut fg, xv)?;
            let (g_vars, bn) = fg.finish();
            // Discriminator weights are constants here: gradients reach the
            // generator through D(G(F)) but never update D.
            let mut fd = Forward::new(&mut g, &model.d_params, Mode::Train, false);
            let d_fake = model.discriminator.forward(&mut fd, pred)?;
            drop(fd);
            track(range, &g.value(d_fake).to_f64_vec());
            let clip = self.config.log_clip;
            let loss = match self.config.loss_variant {
                LossVariant::Weighted => g_loss(&mut g, pred, yv, d_fake, clip)?,
                LossVariant::Additive { sigma_sq } => g_loss_sigma(&mut g, pred, yv, d_fake, sigma_sq, clip)?,
            };
            total += finite(g.value(loss).item().to_f64_lossy(), "generator", epoch)?;
            g.backward(loss)?;
            let grads = collect_grads(&g, &model.g_params, &g_vars);
            apply_adam(&mut model.g_params, &mut self.g_opt, grads);
            model.g_params.update_running(&bn, DEFAULT_BN_MOMENTUM);
        }
        Ok(total / batches.len() as f64)
    }
}

fn track(range: &mut (f64, f64), values: &[f64]) {
    for &v in values {
        range.0 = range.0.min(v);
        range.1 = range.1.max(v);
    }
}

fn load<T: Scalar>(data: &PairSet, idx: &[usize], norm: &NormStats) -> Result<(Tensor<T>, Tensor<T>)> {
    let pairs = idx.iter().map(|&i| data.pair(i)).collect::<Result<Vec<SamplePair>>>()?;
    stack_batch(&pairs, norm)
}
