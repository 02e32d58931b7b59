//! Synthetic demand spikes for robustness checks.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::datapipe::TrafficSeries;
use crate::error::{MtsrError, Result};

/// Rectangle of fine cells.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    pub row: usize,
    pub col: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Region {
    pub fn contains(&self, r: usize, c: usize) -> bool {
        r >= self.row && r < self.row + self.rows && c >= self.col && c < self.col + self.cols
    }
}

/// Adds `magnitude` MB to every cell of `region` in frames `time_range`.
pub fn inject_anomaly(
    series: &TrafficSeries,
    region: Region,
    magnitude: f64,
    time_range: Range<usize>,
) -> Result<TrafficSeries> {
    if region.rows == 0
        || region.cols == 0
        || region.row + region.rows > series.rows()
        || region.col + region.cols > series.cols()
    {
        return Err(MtsrError::Dimension(format!(
            "region {region:?} outside the {}x{} grid",
            series.rows(),
            series.cols()
        )));
    }
    if !(magnitude >= 0.0 && magnitude.is_finite()) {
        return Err(MtsrError::Config(format!(
            "anomaly magnitude {magnitude} must be finite and non-negative"
        )));
    }
    if time_range.end > series.len() {
        return Err(MtsrError::Dimension(format!(
            "time range {time_range:?} beyond {} frames",
            series.len()
        )));
    }
    Ok(series.map_frames(|t, f| {
        let mut f = f.clone();
        if time_range.contains(&t) {
            for r in region.row..region.row + region.rows {
                for c in region.col..region.col + region.cols {
                    f.set(r, c, f.get(r, c) + magnitude);
                }
            }
        }
        f
    }))
}
