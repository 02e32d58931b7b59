//! Full-grid reconstruction by window stitching, and the method comparison report.

use std::io::Write;
use std::path::Path;

use mtsr_tensor::{Scalar, Tensor};

use super::metrics::{nrmse, psnr, ssim, MetricConfig};
use crate::baselines::{bicubic_upsample, uniform_upsample, BicubicConfig};
use crate::datapipe::{fmt_f64, stack_batch, stitch, GridFrame, NormStats, PairSet, ProbeLayout, SamplePair};
use crate::error::{MtsrError, Result};
use crate::training::{GanModel, SrcnnModel};

/// Anything that turns coarse window sequences into fine windows (raw MB).
pub trait Reconstructor {
    fn name(&self) -> String;

    fn predict(&self, pairs: &[SamplePair], layout: &ProbeLayout, norm: &NormStats) -> Result<Vec<GridFrame>>;
}

/// Replicates each probe's reading over its cells.
pub struct UniformMethod;

impl Reconstructor for UniformMethod {
    fn name(&self) -> String {
        "uniform".into()
    }

    fn predict(&self, pairs: &[SamplePair], layout: &ProbeLayout, _: &NormStats) -> Result<Vec<GridFrame>> {
        pairs.iter().map(|p| uniform_upsample(p.input.last(), layout)).collect()
    }
}

/// Bicubic interpolation of the newest coarse frame.
pub struct BicubicMethod(pub BicubicConfig);

impl Reconstructor for BicubicMethod {
    fn name(&self) -> String {
        "bicubic".into()
    }

    fn predict(&self, pairs: &[SamplePair], layout: &ProbeLayout, _: &NormStats) -> Result<Vec<GridFrame>> {
        let factor = layout
            .mean_factor()
            .ok_or_else(|| MtsrError::Config("layout has no integral upscaling factor".into()))?;
        pairs
            .iter()
            .map(|p| bicubic_upsample(p.input.last(), factor, &self.0))
            .collect()
    }
}

/// Returns the ground truth; a sanity reference for the report.
pub struct OracleMethod;

impl Reconstructor for OracleMethod {
    fn name(&self) -> String {
        "oracle".into()
    }

    fn predict(&self, pairs: &[SamplePair], _: &ProbeLayout, _: &NormStats) -> Result<Vec<GridFrame>> {
        Ok(pairs.iter().map(|p| p.target.clone()).collect())
    }
}

fn to_frame(values: Vec<f64>, side: usize, norm: &NormStats, time: usize) -> Result<GridFrame> {
    // Traffic is non-negative; denormalized network output is clamped at zero.
    let v = values.into_iter().map(|z| norm.denormalize(z).max(0.0)).collect();
    Ok(GridFrame::new(side, side, v)?.with_time(time))
}

/// A trained generator, optionally labelled (e.g. the MSE-only variant).
pub struct ZipNetMethod<'a, T> {
    pub model: &'a GanModel<T>,
    pub label: String,
    pub batch_size: usize,
}

impl<T: Scalar> Reconstructor for ZipNetMethod<'_, T> {
    fn name(&self) -> String {
        self.label.clone()
    }

    fn predict(&self, pairs: &[SamplePair], _: &ProbeLayout, norm: &NormStats) -> Result<Vec<GridFrame>> {
        let side = self.model.instance().window_side;
        let mut out = Vec::with_capacity(pairs.len());
        for chunk in pairs.chunks(self.batch_size.max(1)) {
            let (x, _): (Tensor<T>, Tensor<T>) = stack_batch(chunk, norm)?;
            let y = self.model.generate(&x)?.to_f64_vec();
            for (p, v) in chunk.iter().zip(y.chunks(side * side)) {
                out.push(to_frame(v.to_vec(), side, norm, p.time_index)?);
            }
        }
        Ok(out)
    }
}

pub struct SrcnnMethod<'a, T>(pub &'a SrcnnModel<T>);

impl<T: Scalar> Reconstructor for SrcnnMethod<'_, T> {
    fn name(&self) -> String {
        "srcnn".into()
    }

    fn predict(&self, pairs: &[SamplePair], layout: &ProbeLayout, norm: &NormStats) -> Result<Vec<GridFrame>> {
        let side = layout.fine_dims().0;
        pairs
            .iter()
            .map(|p| to_frame(self.0.predict(&p.input, layout, norm)?, side, norm, p.time_index))
            .collect()
    }
}

/// Predicts every window of snapshot `t` and stitches them into the full grid.
pub fn reconstruct_frame(method: &dyn Reconstructor, data: &PairSet, norm: &NormStats, t: usize) -> Result<GridFrame> {
    let pairs = data
        .origins()
        .iter()
        .map(|&o| data.pair_at(t, o))
        .collect::<Result<Vec<_>>>()?;
    let preds = method.predict(&pairs, data.layout(), norm)?;
    let windows: Vec<_> = pairs.iter().map(|p| p.window_origin).zip(preds).collect();
    let series = data.series();
    Ok(stitch(&windows, series.rows(), series.cols())?.with_time(t))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub method: String,
    pub layout: String,
    /// Means over the evaluated snapshots; `None` when any snapshot failed.
    pub nrmse: Option<f64>,
    pub psnr_db: Option<f64>,
    pub ssim: Option<f64>,
    pub snapshots: usize,
    pub failures: usize,
}

/// Mean metrics of each method over every snapshot of `data`.
pub fn evaluate_layout(
    layout_label: &str,
    data: &PairSet,
    norm: &NormStats,
    methods: &[&dyn Reconstructor],
    cfg: &MetricConfig,
) -> Result<Vec<ReportRow>> {
    cfg.validate()?;
    let mut rows = Vec::new();
    for m in methods {
        let (mut n, mut p, mut s) = (0.0, 0.0, 0.0);
        let (mut ok, mut failures) = (0, 0);
        for t in data.times() {
            let truth = data.series().frame(t);
            let scored = reconstruct_frame(*m, data, norm, t)
                .and_then(|pred| Ok((nrmse(&pred, truth)?, psnr(&pred, truth, cfg)?, ssim(&pred, truth, cfg)?)));
            match scored {
                Ok((a, b, c)) => {
                    n += a;
                    p += b;
                    s += c;
                    ok += 1;
                }
                Err(e) => {
                    log::warn!("{} failed on snapshot {t} of {layout_label}: {e}", m.name());
                    failures += 1;
                }
            }
        }
        let mean = |v: f64| (failures == 0 && ok > 0).then(|| v / ok as f64);
        rows.push(ReportRow {
            method: m.name(),
            layout: layout_label.to_string(),
            nrmse: mean(n),
            psnr_db: mean(p),
            ssim: mean(s),
            snapshots: ok + failures,
            failures,
        });
    }
    Ok(rows)
}

/// `method,layout,nrmse,psnr_db,ssim`; failed rows leave the metrics empty.
pub fn write_report_csv(path: &Path, rows: &[ReportRow]) -> Result<()> {
    let io = |e| MtsrError::io(path, e);
    let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    writeln!(out, "method,layout,nrmse,psnr_db,ssim").map_err(io)?;
    let cell = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.method,
            r.layout,
            cell(r.nrmse),
            cell(r.psnr_db),
            cell(r.ssim)
        )
        .map_err(io)?;
    }
    out.flush().map_err(io)
}
