//! Traffic series ingestion, synthesis, probe aggregation, normalization,
//! windowing and sample-pair assembly.

mod dataset;
mod ingest;
mod layout;
mod norm;
mod series;
mod synth;
mod windows;

pub use dataset::{
    build_dataset, build_pairs, stack_batch, CoarseSequence, Dataset, DatasetSpec, PairSet, SamplePair, SplitSpec,
};
pub use ingest::{fmt_f64, ingest, ingest_telecom_italia, sidecar_path, write_grid_csv, GridMeta, CSV_HEADER};
pub use layout::{LayoutKind, Probe, ProbeLayout, MIXTURE_SHARES, MIXTURE_SIZES};
pub use norm::{fit_norm, NormStats};
pub use series::{GridFrame, TrafficSeries};
pub use synth::{synth_series, Hotspot, SynthConfig};
pub use windows::{make_windows, stitch, window_origins};
