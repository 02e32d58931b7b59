use crate::error::{MtsrError, Result};

/// One snapshot of per-cell traffic volume (MB per interval), row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFrame {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    pub time_index: usize,
}

impl GridFrame {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(MtsrError::Dimension(format!("frame of {rows}x{cols} cells")));
        }
        if values.len() != rows * cols {
            return Err(MtsrError::Dimension(format!(
                "{rows}x{cols} frame given {} values",
                values.len()
            )));
        }
        Ok(GridFrame {
            rows,
            cols,
            values,
            time_index: 0,
        })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        GridFrame {
            rows,
            cols,
            values: vec![value; rows * cols],
            time_index: 0,
        }
    }

    pub fn with_time(mut self, t: usize) -> Self {
        self.time_index = t;
        self
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.values[r * self.cols + c] = v;
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.values.len() as f64
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `side x side` sub-frame with top-left corner at `origin`.
    pub fn window(&self, origin: (usize, usize), side: usize) -> Result<GridFrame> {
        let (r0, c0) = origin;
        if r0 + side > self.rows || c0 + side > self.cols {
            return Err(MtsrError::Dimension(format!(
                "window {side}x{side} at {origin:?} exceeds {}x{} grid",
                self.rows, self.cols
            )));
        }
        let mut values = Vec::with_capacity(side * side);
        for r in r0..r0 + side {
            values.extend_from_slice(&self.values[r * self.cols + c0..r * self.cols + c0 + side]);
        }
        Ok(GridFrame {
            rows: side,
            cols: side,
            values,
            time_index: self.time_index,
        })
    }
}

/// A constant-interval sequence of frames over one grid.
#[derive(Clone, Debug, PartialEq)]
pub struct TrafficSeries {
    rows: usize,
    cols: usize,
    interval_minutes: u32,
    frames: Vec<GridFrame>,
}

impl TrafficSeries {
    /// Validates shared dimensions, non-negative finite values and
    /// consecutive time indices.
    pub fn new(rows: usize, cols: usize, interval_minutes: u32, frames: Vec<GridFrame>) -> Result<Self> {
        if interval_minutes == 0 {
            return Err(MtsrError::Config("interval_minutes must be positive".into()));
        }
        for (i, f) in frames.iter().enumerate() {
            if f.dims() != (rows, cols) {
                return Err(MtsrError::Dimension(format!(
                    "frame {i} is {}x{}, series is {rows}x{cols}",
                    f.rows, f.cols
                )));
            }
            if let Some(v) = f.values.iter().find(|v| !v.is_finite() || **v < 0.0) {
                return Err(MtsrError::Config(format!("frame {i} holds invalid traffic value {v}")));
            }
            if i > 0 && f.time_index != frames[i - 1].time_index + 1 {
                return Err(MtsrError::Config(format!(
                    "frame {i} has time index {} after {}",
                    f.time_index,
                    frames[i - 1].time_index
                )));
            }
        }
        Ok(TrafficSeries {
            rows,
            cols,
            interval_minutes,
            frames,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn interval_minutes(&self) -> u32 {
        self.interval_minutes
    }

    pub fn frames(&self) -> &[GridFrame] {
        &self.frames
    }

    pub fn frame(&self, t: usize) -> &GridFrame {
        &self.frames[t]
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Replaces frame contents, keeping grid and timing metadata.
    pub(crate) fn map_frames(&self, mut f: impl FnMut(usize, &GridFrame) -> GridFrame) -> Self {
        TrafficSeries {
            rows: self.rows,
            cols: self.cols,
            interval_minutes: self.interval_minutes,
            frames: self.frames.iter().enumerate().map(|(t, fr)| f(t, fr)).collect(),
        }
    }
}
