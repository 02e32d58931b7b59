use serde::{Deserialize, Serialize};

use super::series::TrafficSeries;
use crate::error::{MtsrError, Result};

/// Global z-score statistics fitted on a range of frames.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: f64,
    pub std: f64,
    /// Half-open frame range the statistics were fitted on.
    pub fitted_on: (usize, usize),
}

impl NormStats {
    pub fn normalize(&self, x: f64) -> f64 {
        (x - self.mean) / self.std
    }

    pub fn denormalize(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }

    pub fn normalize_slice(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.normalize(x)).collect()
    }

    pub fn denormalize_slice(&self, zs: &[f64]) -> Vec<f64> {
        zs.iter().map(|&z| self.denormalize(z)).collect()
    }
}

/// Fits mean and (population) standard deviation over all cells of frames `range`.
pub fn fit_norm(series: &TrafficSeries, range: std::ops::Range<usize>) -> Result<NormStats> {
    if range.is_empty() || range.end > series.len() {
        return Err(MtsrError::Config(format!(
            "normalization range {range:?} is empty or beyond {} frames",
            series.len()
        )));
    }
    let frames = &series.frames()[range.clone()];
    let n = frames.iter().map(|f| f.len()).sum::<usize>() as f64;
    let mean = frames.iter().map(|f| f.sum()).sum::<f64>() / n;
    let var = frames
        .iter()
        .flat_map(|f| f.values().iter())
        .map(|v| (v - mean) * (v - mean))
        .sum::<f64>()
        / n;
    let std = var.sqrt();
    if !(std > 0.0) {
        return Err(MtsrError::Config(
            "cannot normalize a constant series (standard deviation is zero)".into(),
        ));
    }
    Ok(NormStats {
        mean,
        std,
        fitted_on: (range.start, range.end),
    })
}
