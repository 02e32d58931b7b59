//! MSE training and inference for the SRCNN baseline.

use mtsr_tensor::{Adam, AdamConfig, Graph, Scalar, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::loss::mse_loss;
use crate::baselines::{bicubic_upsample, BicubicConfig};
use crate::datapipe::{CoarseSequence, NormStats, PairSet, ProbeLayout};
use crate::error::{MtsrError, Result};
use crate::networks::{collect_grads, Forward, Mode, ParamStore, Srcnn, SrcnnSpec};

/// SRCNN with its parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct SrcnnModel<T> {
    pub net: Srcnn,
    pub params: ParamStore<T>,
}

/// Bicubic upsampling of the newest coarse frame, normalized, as `[1, H, W]` values.
pub fn srcnn_input(seq: &CoarseSequence, layout: &ProbeLayout, norm: &NormStats) -> Result<Vec<f64>> {
    let factor = layout
        .mean_factor()
        .ok_or_else(|| MtsrError::Config("layout has no integral upscaling factor".into()))?;
    let up = bicubic_upsample(seq.last(), factor, &BicubicConfig::default())?;
    Ok(norm.normalize_slice(up.values()))
}

fn batch<T: Scalar>(data: &PairSet, idx: &[usize], norm: &NormStats) -> Result<(Tensor<T>, Tensor<T>)> {
    let side = data.window_side();
    let mut x = Vec::new();
    let mut y = Vec::new();
    for &i in idx {
        let p = data.pair(i)?;
        x.extend(
            srcnn_input(&p.input, data.layout(), norm)?
                .into_iter()
                .map(T::from_f64_lossy),
        );
        y.extend(p.target.values().iter().map(|&v| T::from_f64_lossy(norm.normalize(v))));
    }
    let shape = [idx.len(), 1, side, side];
    Ok((Tensor::new(&shape, x)?, Tensor::new(&shape, y)?))
}

impl<T: Scalar> SrcnnModel<T> {
    pub fn build(spec: SrcnnSpec, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let net = Srcnn::build(spec, &mut params, &mut rng)?;
        Ok(SrcnnModel { net, params })
    }

    /// Adam on the MSE; returns the epoch-mean losses.
    pub fn fit(
        &mut self,
        data: &PairSet,
        norm: &NormStats,
        epochs: usize,
        batch_size: usize,
        learning_rate: f64,
        seed: u64,
    ) -> Result<Vec<f64>> {
        if data.is_empty() || batch_size == 0 {
            return Err(MtsrError::Empty("SRCNN training split"));
        }
        let lens = self
            .params
            .weight_ids()
            .iter()
            .map(|&id| self.params.get(id).numel())
            .collect::<Vec<_>>();
        let mut opt = Adam::<T>::new(learning_rate, AdamConfig::default(), lens);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(2);
        let mut losses = Vec::new();
        for epoch in 0..epochs {
            let mut order: Vec<usize> = (0..data.len()).collect();
            order.shuffle(&mut rng);
            let mut total = 0.0;
            let chunks: Vec<&[usize]> = order.chunks(batch_size).collect();
            for idx in &chunks {
                let (x, y) = batch::<T>(data, idx, norm)?;
                let mut g = Graph::new();
                let xv = g.constant(x);
                let yv = g.constant(y);
                let mut f = Forward::new(&mut g, &self.params, Mode::Train, true);
                let pred = self.net.forward(&mut f, xv)?;
                let (vars, _) = f.finish();
                let loss = mse_loss(&mut g, pred, yv)?;
                let l = g.value(loss).item().to_f64_lossy();
                if !l.is_finite() {
                    return Err(MtsrError::Numeric(format!("SRCNN loss became {l} in epoch {epoch}")));
                }
                total += l;
                g.backward(loss)?;
                let grads: Vec<Vec<T>> = collect_grads(&g, &self.params, &vars)
                    .into_iter()
                    .zip(self.params.ids())
                    .filter(|(_, id)| self.params.kind(*id) == crate::networks::ParamKind::Weight)
                    .map(|(gr, id)| gr.map_or_else(|| vec![T::zero(); self.params.get(id).numel()], |t| t.into_data()))
                    .collect();
                opt.step(
                    self.params
                        .weights_mut()
                        .map(|t| t.data_mut())
                        .zip(grads.iter().map(|g| g.as_slice())),
                );
            }
            losses.push(total / chunks.len() as f64);
        }
        Ok(losses)
    }

    /// Normalized prediction for one coarse sequence.
    pub fn predict(&self, seq: &CoarseSequence, layout: &ProbeLayout, norm: &NormStats) -> Result<Vec<f64>> {
        let (h, w) = layout.fine_dims();
        let x: Vec<T> = srcnn_input(seq, layout, norm)?
            .into_iter()
            .map(T::from_f64_lossy)
            .collect();
        let mut g = Graph::new();
        let xv = g.constant(Tensor::new(&[1, 1, h, w], x)?);
        let mut f = Forward::new(&mut g, &self.params, Mode::Infer, false);
        let y = self.net.forward(&mut f, xv)?;
        Ok(g.value(y).to_f64_vec())
    }
}
