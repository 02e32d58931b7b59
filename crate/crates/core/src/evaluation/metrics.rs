//! Frame-level accuracy metrics in raw traffic units.

use serde::{Deserialize, Serialize};

use crate::datapipe::GridFrame;
use crate::error::{MtsrError, Result};

/// Largest single-cell volume in the Milan set (MB).
pub const MILAN_PEAK_MB: f64 = 5496.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricConfig {
    pub psnr_max: f64,
    pub ssim_c1: f64,
    pub ssim_c2: f64,
    /// Returned by [`psnr`] when the frames are identical.
    pub psnr_cap: f64,
}

impl MetricConfig {
    /// Reference SSIM constants `(0.01 L)^2`, `(0.03 L)^2` for peak `L`.
    pub fn for_peak(peak: f64) -> Self {
        MetricConfig {
            psnr_max: peak,
            ssim_c1: (0.01 * peak).powi(2),
            ssim_c2: (0.03 * peak).powi(2),
            psnr_cap: 200.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if [self.psnr_max, self.ssim_c1, self.ssim_c2, self.psnr_cap]
            .iter()
            .all(|v| *v > 0.0 && v.is_finite())
        {
            Ok(())
        } else {
            Err(MtsrError::Config("metric constants must be positive and finite".into()))
        }
    }
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self::for_peak(MILAN_PEAK_MB)
    }
}

fn same_dims(pred: &GridFrame, truth: &GridFrame) -> Result<()> {
    if pred.dims() != truth.dims() {
        return Err(MtsrError::Dimension(format!(
            "prediction {:?} vs truth {:?}",
            pred.dims(),
            truth.dims()
        )));
    }
    Ok(())
}

fn mse(pred: &GridFrame, truth: &GridFrame) -> f64 {
    let n = truth.len() as f64;
    pred.values()
        .iter()
        .zip(truth.values())
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / n
}

/// Root-mean-square error divided by the truth mean.
pub fn nrmse(pred: &GridFrame, truth: &GridFrame) -> Result<f64> {
    same_dims(pred, truth)?;
    let mean = truth.mean();
    if !(mean > 0.0) {
        return Err(MtsrError::Numeric(
            "NRMSE undefined for a truth frame with zero mean".into(),
        ));
    }
    Ok(mse(pred, truth).sqrt() / mean)
}

/// `20 log10(max) - 10 log10(MSE)` in dB, or `psnr_cap` for identical frames.
pub fn psnr(pred: &GridFrame, truth: &GridFrame, cfg: &MetricConfig) -> Result<f64> {
    same_dims(pred, truth)?;
    let m = mse(pred, truth);
    if m == 0.0 {
        return Ok(cfg.psnr_cap);
    }
    Ok(20.0 * cfg.psnr_max.log10() - 10.0 * m.log10())
}

/// Whole-frame structural similarity.
pub fn ssim(pred: &GridFrame, truth: &GridFrame, cfg: &MetricConfig) -> Result<f64> {
    same_dims(pred, truth)?;
    let n = truth.len() as f64;
    let (mx, my) = (pred.mean(), truth.mean());
    let (mut vx, mut vy, mut cov) = (0.0, 0.0, 0.0);
    for (p, t) in pred.values().iter().zip(truth.values()) {
        vx += (p - mx) * (p - mx);
        vy += (t - my) * (t - my);
        cov += (p - mx) * (t - my);
    }
    let (vx, vy, cov) = (vx / n, vy / n, cov / n);
    let num = (2.0 * mx * my + cfg.ssim_c1) * (2.0 * cov + cfg.ssim_c2);
    let den = (mx * mx + my * my + cfg.ssim_c1) * (vx + vy + cfg.ssim_c2);
    Ok(num / den)
}
