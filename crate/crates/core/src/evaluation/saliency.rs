//! Input-gradient saliency: how strongly each of the S input frames moves
//! the generator objective.

use std::io::Write;
use std::path::Path;

use mtsr_tensor::{Graph, Scalar, Tensor};

use crate::datapipe::{stack_batch, NormStats, PairSet};
use crate::error::{MtsrError, Result};
use crate::networks::{Forward, InstanceConfig, Mode};
use crate::training::{g_loss, GanModel};

#[derive(Clone, Debug, PartialEq)]
pub struct SaliencyReport {
    /// Mean `|dL/dF|` per temporal frame, oldest first.
    pub per_frame_magnitudes: Vec<f64>,
    pub instance: InstanceConfig,
    pub samples: usize,
}

/// Gradient of the per-sample generator objective with respect to the
/// normalized input `[1,1,S,h,w]`, with both networks in inference mode.
pub fn input_gradient<T: Scalar>(
    model: &GanModel<T>,
    input: &Tensor<T>,
    truth: &Tensor<T>,
    clip: f64,
) -> Result<Tensor<T>> {
    let mut g = Graph::new();
    let x = g.leaf(input.clone(), true);
    let y = g.constant(truth.clone());
    let mut fg = Forward::new(&mut g, &model.g_params, Mode::Infer, false);
    let pred = model.generator.forward(&mut fg, x)?;
    drop(fg);
    let mut fd = Forward::new(&mut g, &model.d_params, Mode::Infer, false);
    let d_fake = model.discriminator.forward(&mut fd, pred)?;
    drop(fd);
    let loss = g_loss(&mut g, pred, y, d_fake, clip)?;
    g.backward(loss)?;
    g.grad(x)
        .ok_or_else(|| MtsrError::Numeric("input received no gradient".into()))
}

/// Averages `|dL/dF|` over samples and cells, separately for each input frame.
pub fn saliency<T: Scalar>(
    model: &GanModel<T>,
    data: &PairSet,
    norm: &NormStats,
    s: usize,
    clip: f64,
) -> Result<SaliencyReport> {
    let instance = *model.instance();
    if s != instance.temporal_length || data.temporal_length() != s {
        return Err(MtsrError::Config(format!(
            "saliency for S={s}, model expects S={}, data holds S={}",
            instance.temporal_length,
            data.temporal_length()
        )));
    }
    if data.is_empty() {
        return Err(MtsrError::Empty("saliency dataset"));
    }
    let mut sums = vec![0.0; s];
    let mut cells = 0;
    for i in 0..data.len() {
        let (x, y) = stack_batch::<T>(&[data.pair(i)?], norm)?;
        let grad = input_gradient(model, &x, &y, clip)?;
        let per = grad.numel() / s;
        cells = per;
        for (k, chunk) in grad.data().chunks(per).enumerate() {
            sums[k] += chunk.iter().map(|v| v.to_f64_lossy().abs()).sum::<f64>();
        }
    }
    let denom = (data.len() * cells) as f64;
    Ok(SaliencyReport {
        per_frame_magnitudes: sums.into_iter().map(|v| v / denom).collect(),
        instance,
        samples: data.len(),
    })
}

/// `frame_index,mean_grad_magnitude` rows.
pub fn write_saliency_csv(path: &Path, report: &SaliencyReport) -> Result<()> {
    let io = |e| MtsrError::io(path, e);
    let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    writeln!(out, "frame_index,mean_grad_magnitude").map_err(io)?;
    for (i, m) in report.per_frame_magnitudes.iter().enumerate() {
        writeln!(out, "{i},{}", crate::datapipe::fmt_f64(*m)).map_err(io)?;
    }
    out.flush().map_err(io)
}
