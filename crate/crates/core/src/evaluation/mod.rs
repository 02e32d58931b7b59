//! Accuracy metrics, input-gradient saliency, anomaly injection and the
//! method comparison report.

mod anomaly;
mod metrics;
mod saliency;
mod suite;

pub use anomaly::{inject_anomaly, Region};
pub use metrics::{nrmse, psnr, ssim, MetricConfig, MILAN_PEAK_MB};
pub use saliency::{input_gradient, saliency, write_saliency_csv, SaliencyReport};
pub use suite::{
    evaluate_layout, reconstruct_frame, write_report_csv, BicubicMethod, OracleMethod, Reconstructor, ReportRow,
    SrcnnMethod, UniformMethod, ZipNetMethod,
};
