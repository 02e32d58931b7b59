//! The five pipeline commands. Each takes a fully resolved [`RunConfig`].

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::{info, warn};
use mtsr::datapipe::{
    build_dataset, build_pairs, ingest, ingest_telecom_italia, sidecar_path, synth_series, write_grid_csv, GridMeta,
    LayoutKind, ProbeLayout, TrafficSeries,
};
use mtsr::evaluation::{
    evaluate_layout, reconstruct_frame, saliency, write_report_csv, write_saliency_csv, BicubicMethod, OracleMethod,
    Reconstructor, ReportRow, SrcnnMethod, UniformMethod, ZipNetMethod,
};
use mtsr::networks::{InstanceConfig, SrcnnSpec};
use mtsr::training::{load_checkpoint, save_checkpoint, write_history_csv, Checkpoint, GanModel, SrcnnModel, Trainer};

use crate::config::{DatasetFormat, RunConfig};
use crate::error::CliError;
use crate::pgm::write_pgm;

pub const SERIES_FILE: &str = "series.csv";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const HISTORY_FILE: &str = "history.csv";
pub const PRETRAIN_HISTORY_FILE: &str = "pretrain_history.csv";
pub const PREDICTION_FILE: &str = "prediction.csv";
pub const REPORT_FILE: &str = "report.csv";
pub const SALIENCY_FILE: &str = "saliency.csv";

pub const METHODS: [&str; 6] = ["uniform", "bicubic", "srcnn", "zipnet", "zipnet-mse", "oracle"];

fn prepare_out(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Usage(format!("cannot create {}: {e}", dir.display())))
}

pub fn load_series(cfg: &RunConfig) -> Result<TrafficSeries, CliError> {
    let path = cfg.dataset_path()?;
    let meta_path = sidecar_path(path);
    if !meta_path.is_file() {
        return Err(CliError::Usage(format!(
            "missing grid metadata {}",
            meta_path.display()
        )));
    }
    let meta = GridMeta::load(&meta_path)?;
    Ok(match cfg.data.format {
        DatasetFormat::Grid => ingest(path, &meta)?,
        DatasetFormat::TelecomItalia => ingest_telecom_italia(path, &meta)?,
    })
}

/// Writes the synthetic series and its sidecar; returns the CSV path.
pub fn cmd_synth(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    cfg.synth.validate()?;
    prepare_out(&cfg.out)?;
    let series = synth_series(&cfg.synth)?;
    let path = cfg.out.join(SERIES_FILE);
    write_grid_csv(&path, &series)?;
    GridMeta::of(&series).save(&sidecar_path(&path))?;
    info!(
        "wrote {} frames of {}x{} to {}",
        series.len(),
        series.rows(),
        series.cols(),
        path.display()
    );
    Ok(path)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutputs {
    pub checkpoint: PathBuf,
    pub history: PathBuf,
    pub pretrain_history: PathBuf,
}

/// Pretraining, then (unless skipped) adversarial training.
pub fn cmd_train(cfg: &RunConfig) -> Result<TrainOutputs, CliError> {
    cfg.dataset_path()?;
    cfg.train.validate()?;
    let instance = InstanceConfig::new(cfg.data.layout, cfg.data.window_side, cfg.data.temporal_length)?;
    let g_spec = cfg.model.generator(&instance)?;
    let d_spec = cfg.model.discriminator(&instance);
    prepare_out(&cfg.out)?;

    let series = Arc::new(load_series(cfg)?);
    let ds = build_dataset(series, &cfg.data.dataset_spec())?;
    let mut model = GanModel::<f32>::build(instance, g_spec, d_spec, cfg.train.seed)?;
    info!(
        "training on {} pairs, generator {} weights, discriminator {} weights",
        ds.train.len(),
        model.g_params.weight_count(),
        model.d_params.weight_count()
    );
    let mut trainer = Trainer::new(cfg.train.clone(), &model)?;
    let pre = trainer.pretrain(&mut model, &ds.train, &ds.norm)?;
    if pre.converged {
        info!("pretraining converged after {} epochs", pre.losses.len());
    }
    let out = TrainOutputs {
        checkpoint: cfg.out.join(CHECKPOINT_FILE),
        history: cfg.out.join(HISTORY_FILE),
        pretrain_history: cfg.out.join(PRETRAIN_HISTORY_FILE),
    };
    write_history_csv(&out.pretrain_history, &pre.history())?;

    let (history, epochs) = if cfg.skip_gan {
        (Vec::new(), 0)
    } else {
        let gan = trainer.train_gan(&mut model, &ds.train, &ds.norm)?;
        if cfg.train.gan_epochs > 0 {
            info!(
                "discriminator outputs stayed within [{:.4}, {:.4}]",
                gan.d_output_range.0, gan.d_output_range.1
            );
        }
        (gan.history, cfg.train.gan_epochs)
    };
    write_history_csv(&out.history, &history)?;
    save_checkpoint(
        &out.checkpoint,
        &Checkpoint::from_model(&model, ds.norm, cfg.train.clone(), epochs),
    )?;
    info!("saved {}", out.checkpoint.display());
    Ok(out)
}

/// Predicts, stitches and denormalizes full-grid frames; returns the files written.
pub fn cmd_infer(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let ckpt_path = cfg.checkpoint_path()?;
    cfg.dataset_path()?;
    if cfg.infer.frames == 0 {
        return Err(CliError::Usage("infer.frames must be positive".into()));
    }
    prepare_out(&cfg.out)?;
    let ckpt = load_checkpoint(ckpt_path)?;
    let series = Arc::new(load_series(cfg)?);
    let inst = *ckpt.model.instance();
    let layout = Arc::new(ProbeLayout::for_kind(inst.layout, inst.window_side, inst.window_side)?);
    let all = build_pairs(
        series.clone(),
        layout,
        inst.temporal_length,
        inst.window_side,
        cfg.data.offset,
        0..series.len(),
    )?;
    let start = match cfg.infer.time {
        Some(t) => t,
        None => cfg.data.split.ranges(series.len())?[2]
            .start
            .max(inst.temporal_length - 1),
    };
    let times = start..start + cfg.infer.frames;
    if times.start < all.times().start || times.end > all.times().end {
        return Err(CliError::Usage(format!(
            "snapshots {times:?} outside the predictable range {:?}",
            all.times()
        )));
    }
    let method = ZipNetMethod {
        model: &ckpt.model,
        label: "zipnet".into(),
        batch_size: cfg.train.batch_size,
    };
    let frames = times
        .clone()
        .map(|t| reconstruct_frame(&method, &all, &ckpt.norm, t))
        .collect::<mtsr::Result<Vec<_>>>()?;
    let mut written = Vec::new();
    if cfg.emit.pgm {
        for f in &frames {
            let p = cfg.out.join(format!("prediction_{}.pgm", f.time_index));
            write_pgm(&p, f, cfg.evaluate.metrics.psnr_max)?;
            written.push(p);
        }
    }
    if cfg.emit.csv {
        let p = cfg.out.join(PREDICTION_FILE);
        // Rows are numbered from the first predicted snapshot so the file re-ingests.
        let renumbered = frames.iter().enumerate().map(|(i, f)| f.clone().with_time(i)).collect();
        let pred = TrafficSeries::new(series.rows(), series.cols(), series.interval_minutes(), renumbered)?;
        write_grid_csv(&p, &pred)?;
        GridMeta::of(&pred).save(&sidecar_path(&p))?;
        written.push(p);
    }
    info!("predicted snapshots {times:?}");
    Ok(written)
}

pub fn layout_label(kind: LayoutKind) -> String {
    match kind {
        LayoutKind::Uniform(n) => format!("uniform-{n}"),
        LayoutKind::Mixture => "mixture".into(),
    }
}

fn missing_row(method: &str, layout: &str, snapshots: usize) -> ReportRow {
    ReportRow {
        method: method.into(),
        layout: layout.into(),
        nrmse: None,
        psnr_db: None,
        ssim: None,
        snapshots,
        failures: snapshots,
    }
}

/// Scores every configured method on every configured layout's test split.
pub fn cmd_evaluate(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    cfg.dataset_path()?;
    cfg.evaluate.metrics.validate()?;
    let methods = &cfg.evaluate.methods;
    if let Some(m) = methods.iter().find(|m| !METHODS.contains(&m.as_str())) {
        return Err(CliError::Usage(format!(
            "unknown method '{m}' (expected one of {})",
            METHODS.join(", ")
        )));
    }
    let wants = |m: &str| methods.iter().any(|x| x == m);
    let zipnet = if wants("zipnet") {
        Some(load_checkpoint(cfg.checkpoint_path()?)?)
    } else {
        None
    };
    let zipnet_mse = if wants("zipnet-mse") {
        let p = cfg
            .mse_checkpoint
            .as_deref()
            .ok_or_else(|| CliError::Usage("method zipnet-mse needs --mse-checkpoint".into()))?;
        crate::config::require_file(p)?;
        Some(load_checkpoint(p)?)
    } else {
        None
    };
    prepare_out(&cfg.out)?;
    let series = Arc::new(load_series(cfg)?);

    // Learned models fix the window and sequence length.
    let reference = zipnet.as_ref().or(zipnet_mse.as_ref()).map(|c| *c.model.instance());
    let layouts = if !cfg.evaluate.layouts.is_empty() {
        cfg.evaluate.layouts.clone()
    } else {
        vec![reference.map_or(cfg.data.layout, |i| i.layout)]
    };
    let mut spec = cfg.data.dataset_spec();
    if let Some(inst) = reference {
        spec.window_side = inst.window_side;
        spec.temporal_length = inst.temporal_length;
    }

    let mut rows = Vec::new();
    for kind in layouts {
        let label = layout_label(kind);
        spec.layout = kind;
        let ds = build_dataset(series.clone(), &spec)?;
        let snapshots = ds.test.times().len();
        for m in methods {
            let scored = match m.as_str() {
                "uniform" => evaluate_layout(&label, &ds.test, &ds.norm, &[&UniformMethod], &cfg.evaluate.metrics)?,
                "bicubic" => {
                    let b = BicubicMethod(Default::default());
                    evaluate_layout(&label, &ds.test, &ds.norm, &[&b], &cfg.evaluate.metrics)?
                }
                "oracle" => evaluate_layout(&label, &ds.test, &ds.norm, &[&OracleMethod], &cfg.evaluate.metrics)?,
                "srcnn" => {
                    let mut model = SrcnnModel::<f32>::build(SrcnnSpec::default(), cfg.train.seed)?;
                    model.fit(
                        &ds.train,
                        &ds.norm,
                        cfg.evaluate.srcnn_epochs,
                        cfg.train.batch_size,
                        cfg.evaluate.srcnn_learning_rate,
                        cfg.train.seed,
                    )?;
                    let s = SrcnnMethod(&model);
                    evaluate_layout(&label, &ds.test, &ds.norm, &[&s], &cfg.evaluate.metrics)?
                }
                _ => {
                    let ckpt = if m == "zipnet" { &zipnet } else { &zipnet_mse };
                    let ckpt = ckpt.as_ref().expect("loaded above");
                    if ckpt.model.instance().layout != kind {
                        warn!(
                            "{m} was trained for {}, not {label}",
                            layout_label(ckpt.model.instance().layout)
                        );
                        vec![missing_row(m, &label, snapshots)]
                    } else {
                        let z = ZipNetMethod {
                            model: &ckpt.model,
                            label: m.clone(),
                            batch_size: cfg.train.batch_size,
                        };
                        evaluate_layout(
                            &label,
                            &ds.test,
                            &ckpt.norm,
                            &[&z as &dyn Reconstructor],
                            &cfg.evaluate.metrics,
                        )?
                    }
                }
            };
            rows.extend(scored);
        }
    }
    for r in &rows {
        match r.nrmse {
            Some(n) => info!("{} on {}: NRMSE {n:.4}", r.method, r.layout),
            None => warn!(
                "{} on {}: {} of {} snapshots failed",
                r.method, r.layout, r.failures, r.snapshots
            ),
        }
    }
    let path = cfg.out.join(REPORT_FILE);
    write_report_csv(&path, &rows)?;
    Ok(path)
}

/// Per-frame input-gradient magnitudes over the test split.
pub fn cmd_saliency(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let ckpt_path = cfg.checkpoint_path()?;
    cfg.dataset_path()?;
    prepare_out(&cfg.out)?;
    let ckpt = load_checkpoint(ckpt_path)?;
    let inst = *ckpt.model.instance();
    let series = Arc::new(load_series(cfg)?);
    let mut spec = cfg.data.dataset_spec();
    spec.layout = inst.layout;
    spec.window_side = inst.window_side;
    spec.temporal_length = inst.temporal_length;
    let ds = build_dataset(series, &spec)?;
    let report = saliency(
        &ckpt.model,
        &ds.test,
        &ckpt.norm,
        inst.temporal_length,
        ckpt.train_config.log_clip,
    )?;
    let path = cfg.out.join(SALIENCY_FILE);
    write_saliency_csv(&path, &report)?;
    info!("per-frame gradient magnitudes {:?}", report.per_frame_magnitudes);
    Ok(path)
}
