//! Non-learned reconstructors: per-probe replication and Keys bicubic interpolation.

use serde::{Deserialize, Serialize};

use crate::datapipe::{GridFrame, ProbeLayout};
use crate::error::{MtsrError, Result};

/// Every fine cell takes its covering probe's reading.
pub fn uniform_upsample(coarse: &GridFrame, layout: &ProbeLayout) -> Result<GridFrame> {
    layout.expand(coarse)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    /// Clamp out-of-range taps to the nearest edge sample.
    Replicate,
    /// Mirror about the edge sample's outer border (`-1 -> 0`, `-2 -> 1`).
    Reflect,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BicubicConfig {
    pub kernel_a: f64,
    pub boundary: Boundary,
}

impl Default for BicubicConfig {
    fn default() -> Self {
        BicubicConfig {
            kernel_a: -0.5,
            boundary: Boundary::Replicate,
        }
    }
}

/// Keys cubic convolution kernel.
pub fn keys_kernel(x: f64, a: f64) -> f64 {
    let x = x.abs();
    if x <= 1.0 {
        ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a
    } else {
        0.0
    }
}

fn resolve(i: isize, n: usize, boundary: Boundary) -> usize {
    let n = n as isize;
    let j = match boundary {
        Boundary::Replicate => i.clamp(0, n - 1),
        Boundary::Reflect => {
            let period = 2 * n;
            let m = i.rem_euclid(period);
            if m < n {
                m
            } else {
                period - 1 - m
            }
        }
    };
    j as usize
}

/// Taps and weights for each output position along one axis. Output cell
/// `o` samples the input at `(o + 0.5) / factor - 0.5` (cell centres aligned).
fn axis_taps(n_in: usize, factor: usize, cfg: &BicubicConfig) -> Vec<[(usize, f64); 4]> {
    (0..n_in * factor)
        .map(|o| {
            let x = (o as f64 + 0.5) / factor as f64 - 0.5;
            let base = x.floor();
            let mut taps = [(0, 0.0); 4];
            for (k, tap) in taps.iter_mut().enumerate() {
                let i = base as isize + k as isize - 1;
                *tap = (resolve(i, n_in, cfg.boundary), keys_kernel(x - i as f64, cfg.kernel_a));
            }
            taps
        })
        .collect()
}

/// Separable bicubic upsampling by an integer `factor` on each axis.
pub fn bicubic_upsample(coarse: &GridFrame, factor: usize, cfg: &BicubicConfig) -> Result<GridFrame> {
    if factor < 1 {
        return Err(MtsrError::Config("bicubic factor must be at least 1".into()));
    }
    if !(cfg.kernel_a < 0.0) {
        return Err(MtsrError::Config(format!("kernel_a {} must be negative", cfg.kernel_a)));
    }
    let (h, w) = coarse.dims();
    let row_taps = axis_taps(h, factor, cfg);
    let col_taps = axis_taps(w, factor, cfg);
    let (oh, ow) = (h * factor, w * factor);
    // Columns first: [h, ow], then rows: [oh, ow].
    let mut tmp = vec![0.0; h * ow];
    for r in 0..h {
        for (o, taps) in col_taps.iter().enumerate() {
            tmp[r * ow + o] = taps.iter().map(|&(c, wt)| wt * coarse.get(r, c)).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for (o, taps) in row_taps.iter().enumerate() {
        for c in 0..ow {
            out[o * ow + c] = taps.iter().map(|&(r, wt)| wt * tmp[r * ow + c]).sum();
        }
    }
    Ok(GridFrame::new(oh, ow, out)?.with_time(coarse.time_index))
}
