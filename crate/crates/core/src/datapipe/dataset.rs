//! Sample pairs: S coarse window frames ending at `t` and the fine window at `t`.
//!
//! Pairs are produced on demand from the shared series, so the full
//! windows-times-frames product is never held in memory.

use std::ops::Range;
use std::sync::Arc;

use mtsr_tensor::{Scalar, Tensor};
use serde::{Deserialize, Serialize};

use super::layout::{LayoutKind, ProbeLayout};
use super::norm::{fit_norm, NormStats};
use super::series::{GridFrame, TrafficSeries};
use super::windows::window_origins;
use crate::error::{MtsrError, Result};

/// Temporal split proportions, applied train -> val -> test over contiguous frames.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub train: u32,
    pub val: u32,
    pub test: u32,
}

impl Default for SplitSpec {
    /// 40 training days, 10 validation days, 10 test days.
    fn default() -> Self {
        SplitSpec {
            train: 40,
            val: 10,
            test: 10,
        }
    }
}

impl SplitSpec {
    /// Frame ranges of the three splits over a series of `frames` snapshots.
    pub fn ranges(&self, frames: usize) -> Result<[Range<usize>; 3]> {
        let total = (self.train + self.val + self.test) as usize;
        if total == 0 {
            return Err(MtsrError::Config("split proportions are all zero".into()));
        }
        let a = frames * self.train as usize / total;
        let b = frames * (self.train + self.val) as usize / total;
        Ok([0..a, a..b, b..frames])
    }
}

/// `S` consecutive coarse frames, oldest first.
#[derive(Clone, Debug, PartialEq)]
pub struct CoarseSequence {
    pub frames: Vec<GridFrame>,
}

impl CoarseSequence {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn last(&self) -> &GridFrame {
        &self.frames[self.frames.len() - 1]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SamplePair {
    pub input: CoarseSequence,
    pub target: GridFrame,
    pub window_origin: (usize, usize),
    pub time_index: usize,
}

/// Lazily materialized pairs for every `(t, origin)` in a time range.
#[derive(Clone, Debug)]
pub struct PairSet {
    series: Arc<TrafficSeries>,
    layout: Arc<ProbeLayout>,
    temporal_length: usize,
    window_side: usize,
    origins: Vec<(usize, usize)>,
    times: Range<usize>,
}

impl PairSet {
    pub fn len(&self) -> usize {
        self.times.len() * self.origins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn temporal_length(&self) -> usize {
        self.temporal_length
    }

    pub fn window_side(&self) -> usize {
        self.window_side
    }

    /// Layout of one window.
    pub fn layout(&self) -> &ProbeLayout {
        &self.layout
    }

    pub fn series(&self) -> &TrafficSeries {
        &self.series
    }

    pub fn origins(&self) -> &[(usize, usize)] {
        &self.origins
    }

    pub fn times(&self) -> Range<usize> {
        self.times.clone()
    }

    /// `(time, origin)` of pair `i`; origins vary fastest.
    pub fn index(&self, i: usize) -> (usize, (usize, usize)) {
        let n = self.origins.len();
        (self.times.start + i / n, self.origins[i % n])
    }

    pub fn pair(&self, i: usize) -> Result<SamplePair> {
        if i >= self.len() {
            return Err(MtsrError::Dimension(format!("pair {i} of {}", self.len())));
        }
        let (t, origin) = self.index(i);
        self.pair_at(t, origin)
    }

    pub fn pair_at(&self, t: usize, origin: (usize, usize)) -> Result<SamplePair> {
        let s = self.temporal_length;
        if t + 1 < s || t >= self.series.len() {
            return Err(MtsrError::Dimension(format!("time {t} has no {s}-frame history")));
        }
        let frames = (t + 1 - s..=t)
            .map(|u| {
                self.layout
                    .aggregate(&self.series.frame(u).window(origin, self.window_side)?)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SamplePair {
            input: CoarseSequence { frames },
            target: self.series.frame(t).window(origin, self.window_side)?,
            window_origin: origin,
            time_index: t,
        })
    }
}

/// All pairs whose target time lies in `range` (and has `s` frames of history).
pub fn build_pairs(
    series: Arc<TrafficSeries>,
    layout: Arc<ProbeLayout>,
    s: usize,
    window_side: usize,
    offset: usize,
    range: Range<usize>,
) -> Result<PairSet> {
    if s == 0 {
        return Err(MtsrError::Config("temporal length S must be at least 1".into()));
    }
    if layout.fine_dims() != (window_side, window_side) {
        return Err(MtsrError::Dimension(format!(
            "layout covers {:?} fine cells, windows are {window_side}x{window_side}",
            layout.fine_dims()
        )));
    }
    let origins = window_origins(series.rows(), series.cols(), window_side, offset)?;
    let start = range.start.max(s - 1);
    let end = range.end.min(series.len());
    Ok(PairSet {
        series,
        layout,
        temporal_length: s,
        window_side,
        origins,
        times: start..end.max(start),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub layout: LayoutKind,
    pub temporal_length: usize,
    pub window_side: usize,
    pub offset: usize,
    #[serde(default)]
    pub split: SplitSpec,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub train: PairSet,
    pub val: PairSet,
    pub test: PairSet,
    /// Fitted on the training frames only.
    pub norm: NormStats,
}

impl Dataset {
    pub fn layout(&self) -> &ProbeLayout {
        self.train.layout()
    }
}

pub fn build_dataset(series: Arc<TrafficSeries>, spec: &DatasetSpec) -> Result<Dataset> {
    let layout = Arc::new(ProbeLayout::for_kind(spec.layout, spec.window_side, spec.window_side)?);
    let [train, val, test] = spec.split.ranges(series.len())?;
    let norm = fit_norm(&series, train.clone())?;
    let make = |range: Range<usize>, name: &'static str| -> Result<PairSet> {
        let set = build_pairs(
            series.clone(),
            layout.clone(),
            spec.temporal_length,
            spec.window_side,
            spec.offset,
            range,
        )?;
        if set.is_empty() {
            return Err(MtsrError::Empty(name));
        }
        Ok(set)
    };
    Ok(Dataset {
        train: make(train, "training split")?,
        val: make(val, "validation split")?,
        test: make(test, "test split")?,
        norm,
    })
}

/// Stacks pairs into normalized model tensors: inputs `[N,1,S,h,w]`, targets `[N,1,H,W]`.
pub fn stack_batch<T: Scalar>(pairs: &[SamplePair], norm: &NormStats) -> Result<(Tensor<T>, Tensor<T>)> {
    let first = pairs.first().ok_or(MtsrError::Empty("batch"))?;
    let s = first.input.len();
    let (h, w) = first.input.frames[0].dims();
    let (fh, fw) = first.target.dims();
    let mut input = Vec::with_capacity(pairs.len() * s * h * w);
    let mut target = Vec::with_capacity(pairs.len() * fh * fw);
    for p in pairs {
        if p.input.len() != s || p.target.dims() != (fh, fw) {
            return Err(MtsrError::Dimension("batch mixes pair shapes".into()));
        }
        for f in &p.input.frames {
            if f.dims() != (h, w) {
                return Err(MtsrError::Dimension("batch mixes coarse frame shapes".into()));
            }
            input.extend(f.values().iter().map(|&v| T::from_f64_lossy(norm.normalize(v))));
        }
        target.extend(p.target.values().iter().map(|&v| T::from_f64_lossy(norm.normalize(v))));
    }
    let n = pairs.len();
    Ok((
        Tensor::new(&[n, 1, s, h, w], input)?,
        Tensor::new(&[n, 1, fh, fw], target)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp_series(frames: usize, side: usize) -> Arc<TrafficSeries> {
        let fs = (0..frames)
            .map(|t| {
                let vals = (0..side * side).map(|i| (t * 1000 + i) as f64).collect();
                GridFrame::new(side, side, vals).unwrap().with_time(t)
            })
            .collect();
        Arc::new(TrafficSeries::new(side, side, 10, fs).unwrap())
    }

    #[test]
    fn ten_frames_three_history_give_eight_pairs() {
        let s = ramp_series(10, 4);
        let layout = Arc::new(ProbeLayout::uniform(4, 4, 2).unwrap());
        let set = build_pairs(s, layout, 3, 4, 1, 0..10).unwrap();
        assert_eq!(set.len(), 8);
        let p = set.pair(0).unwrap();
        assert_eq!(p.time_index, 2);
        assert_eq!(p.input.len(), 3);
    }

    #[test]
    fn single_frame_history_is_current_aggregate() {
        let s = ramp_series(4, 4);
        let layout = Arc::new(ProbeLayout::uniform(4, 4, 2).unwrap());
        let set = build_pairs(s.clone(), layout.clone(), 1, 4, 1, 0..4).unwrap();
        assert_eq!(set.len(), 4);
        let p = set.pair(3).unwrap();
        assert_eq!(p.input.frames, vec![layout.aggregate(s.frame(3)).unwrap()]);
    }

    #[test]
    fn inputs_track_history_of_target_window() {
        let s = ramp_series(6, 6);
        let layout = Arc::new(ProbeLayout::uniform(4, 4, 2).unwrap());
        let set = build_pairs(s.clone(), layout.clone(), 3, 4, 1, 0..6).unwrap();
        assert_eq!(set.len(), 4 * 9);
        for i in 0..set.len() {
            let p = set.pair(i).unwrap();
            assert_eq!(p.target, s.frame(p.time_index).window(p.window_origin, 4).unwrap());
            for (k, f) in p.input.frames.iter().enumerate() {
                let u = p.time_index + k + 1 - 3;
                let want = layout
                    .aggregate(&s.frame(u).window(p.window_origin, 4).unwrap())
                    .unwrap();
                assert_eq!(f, &want);
            }
        }
    }

    #[test]
    fn split_is_contiguous_forty_ten_ten() {
        let [a, b, c] = SplitSpec::default().ranges(60).unwrap();
        assert_eq!((a, b, c), (0..40, 40..50, 50..60));
    }

    #[test]
    fn dataset_normalizes_with_train_statistics() {
        let s = ramp_series(12, 4);
        let spec = DatasetSpec {
            layout: LayoutKind::Uniform(2),
            temporal_length: 2,
            window_side: 4,
            offset: 1,
            split: SplitSpec {
                train: 4,
                val: 1,
                test: 1,
            },
        };
        let ds = build_dataset(s.clone(), &spec).unwrap();
        assert_eq!(ds.norm, fit_norm(&s, 0..8).unwrap());
        assert_eq!(ds.train.len(), 7);
        assert_eq!((ds.val.len(), ds.test.len()), (2, 2));
        let pairs: Vec<_> = (0..2).map(|i| ds.test.pair(i).unwrap()).collect();
        let (x, y) = stack_batch::<f64>(&pairs, &ds.norm).unwrap();
        assert_eq!(x.shape(), &[2, 1, 2, 2, 2]);
        assert_eq!(y.shape(), &[2, 1, 4, 4]);
        assert_eq!(y.data()[0], ds.norm.normalize(pairs[0].target.values()[0]));
    }

    #[test]
    fn empty_split_is_an_error() {
        let s = ramp_series(3, 4);
        let spec = DatasetSpec {
            layout: LayoutKind::Uniform(2),
            temporal_length: 3,
            window_side: 4,
            offset: 1,
            split: SplitSpec::default(),
        };
        assert!(matches!(build_dataset(s, &spec), Err(MtsrError::Empty(_))));
    }
}
