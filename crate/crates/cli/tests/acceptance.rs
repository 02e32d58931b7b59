//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any failure.
//!
//! Criteria 7, 8 and 11 train the desk configuration in `configs/desk.toml`
//! and take several minutes on one core.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use mtsr::baselines::BicubicConfig;
use mtsr::datapipe::{
    build_dataset, build_pairs, fit_norm, ingest, make_windows, sidecar_path, synth_series, write_grid_csv, Dataset,
    GridFrame, GridMeta, LayoutKind, ProbeLayout, SynthConfig, TrafficSeries,
};
use mtsr::evaluation::{
    evaluate_layout, inject_anomaly, input_gradient, nrmse, psnr, reconstruct_frame, saliency, ssim, BicubicMethod,
    MetricConfig, Reconstructor, Region, UniformMethod, ZipNetMethod,
};
use mtsr::networks::{DiscriminatorSpec, Forward, InstanceConfig, Mode, ParamStore, ZipNetSpec, ZipperBlock};
use mtsr::training::{d_loss, g_loss, load_checkpoint, mse_loss, save_checkpoint, Checkpoint, GanModel, Trainer};
use mtsr_cli::commands::{cmd_synth, cmd_train};
use mtsr_cli::RunConfig;
use mtsr_tensor::gradcheck::check_gradients;
use mtsr_tensor::{BatchNormMode, Conv2dConfig, Conv3dConfig, DeconvConfig, Graph, Padding, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

const CLIP: f64 = 1e-7;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rand_t(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Values bounded away from zero, for piecewise-linear activations.
fn off_kink(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    rand_t(shape, rng).map(|v| if v.abs() < 0.05 { v + 0.1f64.copysign(v) } else { v })
}

// ---- 1: gradient suite ---------------------------------------------------

fn gradient_suite() -> Outcome {
    const H: f64 = 1e-6;
    const TOL: f64 = 1e-4;
    const CASES: u64 = 20;
    let started = Instant::now();
    let mut worst: Vec<(&str, f64)> = Vec::new();
    let mut check = |name: &'static str,
                     inputs: Vec<Tensor<f64>>,
                     f: &dyn Fn(&mut Graph<f64>, &[mtsr_tensor::Var]) -> mtsr_tensor::Var| {
        let r = check_gradients(&inputs, H, |g, v| Ok(f(g, v))).map_err(|e| format!("{name}: {e}"))?;
        match worst.iter_mut().find(|(n, _)| *n == name) {
            Some(slot) => slot.1 = slot.1.max(r.worst()),
            None => worst.push((name, r.worst())),
        }
        ensure(r.worst() <= TOL, || format!("{name}: relative error {:.3e}", r.worst()))
    };
    let weighted_sum = |g: &mut Graph<f64>, y: mtsr_tensor::Var, w: &Tensor<f64>| {
        let wv = g.constant(w.clone());
        let p = g.mul(y, wv).unwrap();
        g.sum(p)
    };

    for seed in 0..CASES {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);

        let (cin, cout) = (rng.random_range(1..=3), rng.random_range(1..=3));
        let k = [rng.random_range(1..=3), rng.random_range(1..=3)];
        let cfg = Conv2dConfig {
            stride: [rng.random_range(1..=2), rng.random_range(1..=2)],
            padding: if rng.random_bool(0.5) {
                Padding::Same
            } else {
                Padding::Valid
            },
        };
        let x = rand_t(&[2, cin, 5, 4], &mut rng);
        let kern = rand_t(&[cout, cin, k[0], k[1]], &mut rng);
        let y_shape = {
            let mut g = Graph::new();
            let (a, b) = (g.constant(x.clone()), g.constant(kern.clone()));
            let y = g.conv2d(a, b, cfg).unwrap();
            g.shape(y).to_vec()
        };
        let w = rand_t(&y_shape, &mut rng);
        check("conv2d", vec![x, kern], &|g, v| {
            let y = g.conv2d(v[0], v[1], cfg).unwrap();
            weighted_sum(g, y, &w)
        })?;

        let cfg3 = Conv3dConfig {
            stride: [1, rng.random_range(1..=2), rng.random_range(1..=2)],
            padding: if rng.random_bool(0.5) {
                Padding::Same
            } else {
                Padding::Explicit([0, 1, 1])
            },
        };
        let x = rand_t(&[2, cin, 3, 4, 4], &mut rng);
        let kern = rand_t(&[cout, cin, rng.random_range(1..=3), 3, 3], &mut rng);
        let y_shape = {
            let mut g = Graph::new();
            let (a, b) = (g.constant(x.clone()), g.constant(kern.clone()));
            let y = g.conv3d(a, b, cfg3).unwrap();
            g.shape(y).to_vec()
        };
        let w = rand_t(&y_shape, &mut rng);
        check("conv3d", vec![x, kern], &|g, v| {
            let y = g.conv3d(v[0], v[1], cfg3).unwrap();
            weighted_sum(g, y, &w)
        })?;

        let stride = [1, rng.random_range(1..=3), rng.random_range(1..=3)];
        let kernel = [rng.random_range(1..=3), 2 * stride[1] - 1, 2 * stride[2] - 1];
        let dcfg = DeconvConfig::upscale(stride, kernel);
        let x = rand_t(&[2, cin, 2, 3, 3], &mut rng);
        let kern = rand_t(&[cin, cout, kernel[0], kernel[1], kernel[2]], &mut rng);
        let y_shape = {
            let mut g = Graph::new();
            let (a, b) = (g.constant(x.clone()), g.constant(kern.clone()));
            let y = g.deconv3d(a, b, dcfg).unwrap();
            g.shape(y).to_vec()
        };
        let w = rand_t(&y_shape, &mut rng);
        check("deconv3d", vec![x, kern], &|g, v| {
            let y = g.deconv3d(v[0], v[1], dcfg).unwrap();
            weighted_sum(g, y, &w)
        })?;

        let c = rng.random_range(1..=3);
        let x = rand_t(&[3, c, 3, 3], &mut rng).map(|v| 2.0 * v + 0.5);
        let gamma = rand_t(&[c], &mut rng).map(|v| v + 1.5);
        let beta = rand_t(&[c], &mut rng);
        let w = rand_t(&[3, c, 3, 3], &mut rng);
        check("batchnorm", vec![x, gamma, beta], &|g, v| {
            let (y, _) = g.batchnorm(v[0], v[1], v[2], BatchNormMode::Train, 1e-5).unwrap();
            weighted_sum(g, y, &w)
        })?;

        let x = off_kink(&[2, 3, 4], &mut rng);
        let w = rand_t(&[2, 3, 4], &mut rng);
        check("lrelu", vec![x.map(|v| 3.0 * v)], &|g, v| {
            let y = g.lrelu(v[0], 0.1).unwrap();
            weighted_sum(g, y, &w)
        })?;
        check("sigmoid", vec![x.map(|v| 4.0 * v)], &|g, v| {
            let y = g.sigmoid(v[0]);
            weighted_sum(g, y, &w)
        })?;

        let mut store = ParamStore::<f64>::new();
        let z = ZipperBlock::new(
            &mut store,
            "zipper",
            2 + (seed as usize % 3),
            2,
            seed % 2 == 0,
            &mut rng,
        )
        .unwrap();
        let x = rand_t(&[2, 2, 3, 3], &mut rng);
        let w = rand_t(&[2, 2, 3, 3], &mut rng);
        check("zipper", vec![x], &|g, v| {
            let mut f = Forward::new(g, &store, Mode::Train, false);
            let y = z.forward(&mut f, v[0]).unwrap();
            weighted_sum(f.g, y, &w)
        })?;

        let pred = rand_t(&[3, 1, 4, 4], &mut rng);
        let truth = rand_t(&[3, 1, 4, 4], &mut rng);
        let probs = |rng: &mut ChaCha8Rng| rand_t(&[3, 1], rng).map(|v| 0.5 + 0.45 * v);
        let (d_real, d_fake) = (probs(&mut rng), probs(&mut rng));
        check("g_loss", vec![pred.clone(), d_fake.clone()], &|g, v| {
            let t = g.constant(truth.clone());
            g_loss(g, v[0], t, v[1], CLIP).unwrap()
        })?;
        check("d_loss", vec![d_real, d_fake], &|g, v| {
            d_loss(g, v[0], v[1], CLIP).unwrap()
        })?;
        check("mse_loss", vec![pred], &|g, v| {
            let t = g.constant(truth.clone());
            mse_loss(g, v[0], t).unwrap()
        })?;
    }
    let secs = started.elapsed().as_secs_f64();
    ensure(secs <= 120.0, || format!("took {secs:.0}s"))?;
    let summary: Vec<String> = worst.iter().map(|(n, e)| format!("{n} {e:.1e}")).collect();
    Ok(format!(
        "{CASES} instances per op in {secs:.1}s, worst: {}",
        summary.join(", ")
    ))
}

// ---- 2: adjointness -------------------------------------------------------

fn forward3(x: &Tensor<f64>, k: &Tensor<f64>, deconv: Option<DeconvConfig>, conv: Conv3dConfig) -> Tensor<f64> {
    let mut g = Graph::new();
    let (a, b) = (g.constant(x.clone()), g.constant(k.clone()));
    let y = match deconv {
        Some(cfg) => g.deconv3d(a, b, cfg).unwrap(),
        None => g.conv3d(a, b, conv).unwrap(),
    };
    g.value(y).clone()
}

fn adjointness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let mut worst = 0.0f64;
    for case in 0..50 {
        let stride = [
            rng.random_range(1..=2),
            rng.random_range(1..=3),
            rng.random_range(1..=3),
        ];
        let kernel = [
            rng.random_range(1..=3),
            rng.random_range(1..=5),
            rng.random_range(1..=5),
        ];
        let padding = [0, 1, 2].map(|i: usize| rng.random_range(0..=(kernel[i] - 1) / 2));
        let output_padding = [0, 1, 2].map(|i: usize| rng.random_range(0..stride[i]));
        let dcfg = DeconvConfig {
            stride,
            padding,
            output_padding,
        };
        let ccfg = Conv3dConfig {
            stride,
            padding: Padding::Explicit(padding),
        };
        let (cy, cx) = (rng.random_range(1..=3), rng.random_range(1..=3));
        let y = rand_t(
            &[
                2,
                cy,
                rng.random_range(1..=3),
                rng.random_range(2..=4),
                rng.random_range(2..=4),
            ],
            &mut rng,
        );
        let k = rand_t(&[cy, cx, kernel[0], kernel[1], kernel[2]], &mut rng);
        let dy = forward3(&y, &k, Some(dcfg), ccfg);
        let x = rand_t(dy.shape(), &mut rng);
        let cxk = forward3(&x, &k, None, ccfg);
        ensure(cxk.shape() == y.shape(), || {
            format!("case {case}: shapes {:?} {:?}", cxk.shape(), y.shape())
        })?;
        let (lhs, rhs) = (dy.dot(&x).unwrap(), y.dot(&cxk).unwrap());
        let rel = (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1e-12);
        worst = worst.max(rel);
        ensure(rel <= 1e-6, || format!("case {case}: {lhs} vs {rhs}"))?;
    }
    Ok(format!("50 configurations, worst relative gap {worst:.1e}"))
}

// ---- 3: metric oracles ----------------------------------------------------

fn mean(v: &[f64]) -> f64 {
    let mut s = 0.0;
    for x in v {
        s += x;
    }
    s / v.len() as f64
}

fn direct_mse(p: &[f64], t: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..t.len() {
        s += (t[i] - p[i]).powi(2);
    }
    s / t.len() as f64
}

fn direct_ssim(p: &[f64], t: &[f64], c1: f64, c2: f64) -> f64 {
    let (mp, mt) = (mean(p), mean(t));
    let n = t.len() as f64;
    let (mut vp, mut vt, mut cov) = (0.0, 0.0, 0.0);
    for i in 0..t.len() {
        vp += (p[i] - mp).powi(2) / n;
        vt += (t[i] - mt).powi(2) / n;
        cov += (p[i] - mp) * (t[i] - mt) / n;
    }
    ((2.0 * mp * mt + c1) * (2.0 * cov + c2)) / ((mp * mp + mt * mt + c1) * (vp + vt + c2))
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

fn metric_oracles() -> Outcome {
    let cfg = MetricConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(200);
    let frame = |rng: &mut ChaCha8Rng| {
        let scale = rng.random_range(1.0..3000.0);
        GridFrame::new(16, 16, (0..256).map(|_| rng.random_range(0.0..scale)).collect()).unwrap()
    };
    let mut worst = 0.0f64;
    for case in 0..100 {
        let (p, t) = (frame(&mut rng), frame(&mut rng));
        let (pv, tv) = (p.values(), t.values());
        let errs = [
            rel(nrmse(&p, &t).unwrap(), direct_mse(pv, tv).sqrt() / mean(tv)),
            rel(
                psnr(&p, &t, &cfg).unwrap(),
                10.0 * (cfg.psnr_max.powi(2) / direct_mse(pv, tv)).log10(),
            ),
            rel(
                ssim(&p, &t, &cfg).unwrap(),
                direct_ssim(pv, tv, cfg.ssim_c1, cfg.ssim_c2),
            ),
        ];
        let e = errs.iter().copied().fold(0.0, f64::max);
        worst = worst.max(e);
        ensure(e <= 1e-12, || format!("case {case}: relative error {e:.3e}"))?;
        ensure(ssim(&t, &t, &cfg).unwrap() == 1.0, || {
            format!("case {case}: SSIM(x, x) != 1")
        })?;
        let c = rng.random_range(0.01..100.0);
        let scale = |f: &GridFrame| GridFrame::new(16, 16, f.values().iter().map(|v| v * c).collect()).unwrap();
        let e = rel(nrmse(&scale(&p), &scale(&t)).unwrap(), nrmse(&p, &t).unwrap());
        ensure(e <= 1e-12, || format!("case {case}: scaled NRMSE off by {e:.3e}"))?;
    }
    Ok(format!("100 pairs, worst relative error {worst:.1e}"))
}

// ---- 4, 5: windows and zipper identity ------------------------------------

fn window_count() -> Outcome {
    let n = make_windows(&GridFrame::zeros(100, 100), 80, 1)
        .map_err(|e| e.to_string())?
        .len();
    ensure(n == 441, || format!("{n} windows"))?;
    Ok("441 windows".into())
}

fn zipper_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(300);
    for k in [2, 8, 24] {
        let mut store = ParamStore::<f64>::new();
        let z = ZipperBlock::new(&mut store, "zipper", k, 4, true, &mut rng).unwrap();
        store.zero_weights(|n| n.ends_with(".conv.weight"));
        let x = rand_t(&[2, 4, 6, 6], &mut rng);
        for mode in [Mode::Infer, Mode::Train] {
            let mut g = Graph::new();
            let xv = g.constant(x.clone());
            let mut f = Forward::new(&mut g, &store, mode, false);
            let y = z.forward(&mut f, xv).unwrap();
            let doubled = x.map(|v| 2.0 * v);
            ensure(g.value(y) == &doubled, || format!("K={k} {mode:?} differs from 2x"))?;
        }
    }
    Ok("K = 2, 8, 24 give exactly 2x".into())
}

// ---- 6: round trips -------------------------------------------------------

fn round_trips() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(400);
    for layout in [
        ProbeLayout::uniform(80, 80, 2).unwrap(),
        ProbeLayout::uniform(80, 80, 4).unwrap(),
        ProbeLayout::uniform(80, 80, 10).unwrap(),
        ProbeLayout::for_kind(LayoutKind::Mixture, 80, 80).unwrap(),
    ] {
        for _ in 0..20 {
            let (r, c) = layout.coarse_dims();
            let coarse = GridFrame::new(r, c, (0..r * c).map(|_| rng.random_range(0.0..5000.0)).collect()).unwrap();
            let back = layout.aggregate(&layout.expand(&coarse).unwrap()).unwrap();
            ensure(back == coarse, || "aggregate after expand is not the identity".into())?;
        }
    }

    let series = synth_series(&SynthConfig {
        rows: 20,
        cols: 20,
        frames: 60,
        seed: 9,
        ..SynthConfig::default()
    })
    .map_err(|e| e.to_string())?;
    let norm = fit_norm(&series, 0..40).unwrap();
    let worst = series
        .frames()
        .iter()
        .flat_map(|f| f.values())
        .map(|&v| (norm.denormalize(norm.normalize(v)) - v).abs() / v.abs().max(1.0))
        .fold(0.0, f64::max);
    ensure(worst <= 1e-12, || {
        format!("normalization round trip off by {worst:.3e}")
    })?;

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("series.csv");
    write_grid_csv(&path, &series).unwrap();
    GridMeta::of(&series).save(&sidecar_path(&path)).unwrap();
    let back = ingest(&path, &GridMeta::load(&sidecar_path(&path)).unwrap()).map_err(|e| e.to_string())?;
    ensure(back == series, || "synthesized series changed through CSV".into())?;

    let inst = InstanceConfig::new(LayoutKind::Uniform(2), 8, 3).unwrap();
    let spec = ZipNetSpec::scaled(2, 3, 2, 4, [4, 4, 1]).unwrap();
    let model = GanModel::<f32>::build(inst, spec, DiscriminatorSpec::vgg(8, 2), 4).unwrap();
    let ckpt = Checkpoint::from_model(&model, norm, Default::default(), 0);
    let p = dir.path().join("m.ckpt");
    save_checkpoint(&p, &ckpt).unwrap();
    let loaded = load_checkpoint(&p).map_err(|e| e.to_string())?;
    let x = Tensor::<f32>::new(
        &[2, 1, 3, 4, 4],
        (0..96).map(|_| rng.random_range(-1.0f32..1.0)).collect(),
    )
    .unwrap();
    let (a, b) = (model.generate(&x).unwrap(), loaded.model.generate(&x).unwrap());
    let same = a.shape() == b.shape() && a.data().iter().zip(b.data()).all(|(p, q)| p.to_bits() == q.to_bits());
    ensure(same, || "checkpoint forward differs".into())?;
    Ok(format!(
        "expand/aggregate exact on 4 layouts, norm within {worst:.1e}, CSV and checkpoint identical"
    ))
}

// ---- 7, 8, 11: desk run ---------------------------------------------------

struct Desk {
    cfg: RunConfig,
    series: Arc<TrafficSeries>,
    ds: Dataset,
    pretrained: Checkpoint,
    pretrain_nrmse: f64,
}

fn desk_config(dir: &Path) -> RunConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.toml");
    let mut cfg = RunConfig::load(&path).expect("desk config");
    cfg.apply_seed();
    cfg.out = dir.to_path_buf();
    cfg.dataset = Some(dir.join("series.csv"));
    cfg.checkpoint = Some(dir.join("model.ckpt"));
    cfg
}

fn zipnet_nrmse(model: &GanModel<f32>, ds: &Dataset) -> f64 {
    let method = ZipNetMethod {
        model,
        label: "zipnet".into(),
        batch_size: 16,
    };
    evaluate_layout("uniform-2", &ds.test, &ds.norm, &[&method], &MetricConfig::default()).unwrap()[0]
        .nrmse
        .unwrap()
}

fn pretraining_learns(dir: &Path, desk: &mut Option<Desk>) -> Outcome {
    let started = Instant::now();
    let mut cfg = desk_config(dir);
    cfg.skip_gan = true;
    ensure(cfg.train.pretrain_epochs <= 50, || {
        "more than 50 pretraining epochs".into()
    })?;
    cmd_synth(&cfg).map_err(|e| e.to_string())?;
    let out = cmd_train(&cfg).map_err(|e| e.to_string())?;
    let ckpt = load_checkpoint(&out.checkpoint).map_err(|e| e.to_string())?;
    let series = Arc::new(mtsr_cli::commands::load_series(&cfg).map_err(|e| e.to_string())?);
    ensure((series.rows(), series.cols(), series.len()) == (32, 32, 400), || {
        "desk series is not 32x32x400".into()
    })?;
    let ds = build_dataset(series.clone(), &cfg.data.dataset_spec()).unwrap();
    let zipnet = ZipNetMethod {
        model: &ckpt.model,
        label: "zipnet".into(),
        batch_size: 16,
    };
    let bicubic = BicubicMethod(BicubicConfig::default());
    let methods: [&dyn Reconstructor; 3] = [&UniformMethod, &bicubic, &zipnet];
    let rows = evaluate_layout("uniform-2", &ds.test, &ds.norm, &methods, &MetricConfig::default()).unwrap();
    let [u, b, z] = [0, 1, 2].map(|i| rows[i].nrmse.unwrap());
    let secs = started.elapsed().as_secs_f64();
    let detail = format!("NRMSE zipnet {z:.4}, bicubic {b:.4}, uniform {u:.4} in {secs:.0}s");
    ensure(z < u && z <= b && secs <= 1800.0, || detail.clone())?;
    *desk = Some(Desk {
        cfg,
        series,
        ds,
        pretrained: ckpt,
        pretrain_nrmse: z,
    });
    Ok(detail)
}

fn gan_stability(desk: &Desk) -> Outcome {
    let started = Instant::now();
    let mut model = desk.pretrained.model.clone();
    let mut train = desk.cfg.train.clone();
    train.gan_epochs = 50;
    let lr = train.gan_learning_rate.unwrap_or(train.learning_rate);
    let mut trainer = Trainer::new(train, &model).map_err(|e| e.to_string())?;
    let report = trainer
        .train_gan(&mut model, &desk.ds.train, &desk.ds.norm)
        .map_err(|e| e.to_string())?;
    ensure(report.history.iter().all(|e| e.loss.is_finite()), || {
        "non-finite loss".into()
    })?;
    let (lo, hi) = report.d_output_range;
    ensure(lo > 0.0 && hi < 1.0, || {
        format!("discriminator output reached [{lo}, {hi}]")
    })?;
    let after = zipnet_nrmse(&model, &desk.ds);
    let before = desk.pretrain_nrmse;
    let detail = format!(
        "50 epochs at lr {lr:e} in {:.0}s, D in [{lo:.3}, {hi:.3}], NRMSE {before:.4} -> {after:.4}",
        started.elapsed().as_secs_f64()
    );
    ensure(after <= 1.1 * before, || detail.clone())?;
    Ok(detail)
}

fn anomaly_harness(desk: &Desk) -> Outcome {
    let layout = ProbeLayout::uniform(32, 32, 2).unwrap();
    let spec = desk.cfg.data.dataset_spec();
    let s = spec.temporal_length;
    let side = spec.window_side;
    let model = &desk.pretrained.model;
    let method = ZipNetMethod {
        model,
        label: "zipnet".into(),
        batch_size: 16,
    };
    let predict = |series: &TrafficSeries, t: usize| {
        let pairs = build_pairs(
            Arc::new(series.clone()),
            Arc::new(layout.clone()),
            s,
            side,
            spec.offset,
            t..t + 1,
        )
        .unwrap();
        reconstruct_frame(&method, &pairs, &desk.pretrained.norm, t).unwrap()
    };
    let (mut hits, mut total) = (0, 0);
    for t in [340, 350, 360, 370, 380, 390] {
        let clean = predict(&desk.series, t);
        for (pr, pc) in [(3, 3), (10, 12), (5, 11), (12, 4), (8, 8), (13, 13)] {
            let p = layout.probe_of(pr * 2, pc * 2);
            let probe = layout.probes()[p];
            let region = Region {
                row: probe.row,
                col: probe.col,
                rows: probe.size,
                cols: probe.size,
            };
            for a in [300.0, 1000.0, 3000.0] {
                let anom = inject_anomaly(&desk.series, region, a, t + 1 - s..t + 1).unwrap();
                let before = layout.aggregate(desk.series.frame(t)).unwrap();
                let after = layout.aggregate(anom.frame(t)).unwrap();
                let (cr, cc) = layout.coarse_cell(p);
                for r in 0..16 {
                    for c in 0..16 {
                        let want = if (r, c) == (cr, cc) { a } else { 0.0 };
                        let d = after.get(r, c) - before.get(r, c);
                        ensure((d - want).abs() <= 1e-12 * after.get(r, c).abs(), || {
                            format!("probe ({r},{c}) moved by {d}, expected {want}")
                        })?;
                    }
                }
                let pred = predict(&anom, t);
                let mut best = (f64::NEG_INFINITY, (0, 0));
                for r in 0..32 {
                    for c in 0..32 {
                        let d = pred.get(r, c) - clean.get(r, c);
                        if d > best.0 {
                            best = (d, (r, c));
                        }
                    }
                }
                total += 1;
                if region.contains(best.1 .0, best.1 .1) {
                    hits += 1;
                }
            }
        }
    }
    let detail = format!("coarse shift exact; maximum increase inside the probe in {hits}/{total} cases");
    ensure(hits == total, || detail.clone())?;
    Ok(detail)
}

// ---- 9: shapes ------------------------------------------------------------

fn shape_contract() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(500);
    for (n_f, coarse, blocks) in [(2, 40, 1), (4, 20, 2), (10, 8, 3)] {
        let inst = InstanceConfig::new(LayoutKind::Uniform(n_f), 80, 2).unwrap();
        let spec = ZipNetSpec::scaled(n_f, 2, 2, 3, [3, 3, 1]).unwrap();
        let model = GanModel::<f64>::build(inst, spec, DiscriminatorSpec::vgg(80, 2), 0).unwrap();
        let got = model.generator.upscaling_block_count();
        ensure(got == blocks, || format!("up-{n_f}: {got} upscaling blocks"))?;
        let y = model.generate(&rand_t(&[1, 1, 2, coarse, coarse], &mut rng)).unwrap();
        ensure(y.shape() == [1, 1, 80, 80], || {
            format!("up-{n_f}: output {:?}", y.shape())
        })?;
    }
    Ok("80x80 from 40/20/8 with 1/2/3 upscaling blocks".into())
}

// ---- 10: saliency ---------------------------------------------------------

fn small_model(s: usize, seed: u64) -> GanModel<f64> {
    let inst = InstanceConfig::new(LayoutKind::Uniform(2), 8, s).unwrap();
    let spec = ZipNetSpec::scaled(2, 2, 2, 3, [3, 3, 1]).unwrap();
    GanModel::build(inst, spec, DiscriminatorSpec::vgg(8, 2), seed).unwrap()
}

fn objective(m: &GanModel<f64>, x: &Tensor<f64>, y: &Tensor<f64>) -> f64 {
    let mut g = Graph::new();
    let (xv, yv) = (g.constant(x.clone()), g.constant(y.clone()));
    let mut fg = Forward::new(&mut g, &m.g_params, Mode::Infer, false);
    let pred = m.generator.forward(&mut fg, xv).unwrap();
    let mut fd = Forward::new(&mut g, &m.d_params, Mode::Infer, false);
    let d = m.discriminator.forward(&mut fd, pred).unwrap();
    let l = g_loss(&mut g, pred, yv, d, CLIP).unwrap();
    g.value(l).item()
}

/// Keeps only the centre temporal tap and the newest frame's folded channels.
fn last_frame_only(m: &mut GanModel<f64>) {
    let s = m.instance().temporal_length;
    let store = &mut m.g_params;
    for id in store.ids().collect::<Vec<_>>() {
        let name = store.name(id).to_string();
        let t = store.get_mut(id);
        let shape = t.shape().to_vec();
        if name.starts_with("upscale") && name.ends_with(".weight") {
            let plane = shape[3] * shape[4];
            for (i, v) in t.data_mut().iter_mut().enumerate() {
                if (i / plane) % shape[2] != 1 {
                    *v = 0.0;
                }
            }
        } else if name == "transition.conv.weight" {
            let plane = shape[2] * shape[3];
            for (i, v) in t.data_mut().iter_mut().enumerate() {
                if ((i / plane) % shape[1]) % s != s - 1 {
                    *v = 0.0;
                }
            }
        }
    }
}

fn saliency_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(600);
    let mut worst = 0.0f64;
    for seed in 0..3 {
        let m = small_model(3, seed);
        let x = rand_t(&[1, 1, 3, 4, 4], &mut rng);
        let y = rand_t(&[1, 1, 8, 8], &mut rng);
        let grad = input_gradient(&m, &x, &y, CLIP).unwrap();
        let scale = grad.data().iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let h = 1e-5;
        for i in 0..x.numel() {
            let (mut up, mut down) = (x.clone(), x.clone());
            up.data_mut()[i] += h;
            down.data_mut()[i] -= h;
            let num = (objective(&m, &up, &y) - objective(&m, &down, &y)) / (2.0 * h);
            let a = grad.data()[i];
            let err = (a - num).abs() / a.abs().max(num.abs()).max(1e-3 * scale);
            worst = worst.max(err);
        }
    }
    ensure(worst <= 1e-4, || format!("input gradient relative error {worst:.3e}"))?;

    let s = 4;
    let mut m = small_model(s, 7);
    last_frame_only(&mut m);
    let frames = (0..12)
        .map(|t| {
            GridFrame::new(8, 8, (0..64).map(|_| rng.random_range(0.0..100.0)).collect())
                .unwrap()
                .with_time(t)
        })
        .collect();
    let series = Arc::new(TrafficSeries::new(8, 8, 10, frames).unwrap());
    let data = build_pairs(
        series.clone(),
        Arc::new(ProbeLayout::uniform(8, 8, 2).unwrap()),
        s,
        8,
        1,
        0..12,
    )
    .unwrap();
    let norm = fit_norm(&series, 0..12).unwrap();
    let report = saliency(&m, &data, &norm, s, CLIP).map_err(|e| e.to_string())?;
    let mags = &report.per_frame_magnitudes;
    ensure(mags[..s - 1].iter().all(|v| *v == 0.0) && mags[s - 1] > 0.0, || {
        format!("fixture magnitudes {mags:?}")
    })?;
    let shown: Vec<String> = mags.iter().map(|v| format!("{v:.2e}")).collect();
    Ok(format!(
        "gradient error {worst:.1e}; fixture magnitudes [{}]",
        shown.join(", ")
    ))
}

// ---- 12: determinism ------------------------------------------------------

const TINY: &str = r#"
seed = 11
[synth]
rows = 16
cols = 16
frames = 60
[data]
layout = { kind = "uniform", factor = 2 }
temporal_length = 2
window_side = 8
offset = 4
[model]
upscale_filters = 2
zipper_modules = 2
zipper_filters = 4
final_block_filters = [4, 4, 1]
discriminator_filters = 2
[train]
batch_size = 4
learning_rate = 0.001
gan_learning_rate = 0.0001
pretrain_epochs = 2
gan_epochs = 2
"#;

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut base = RunConfig::parse(TINY).unwrap();
    base.apply_seed();
    base.out = dir.path().join("data");
    cmd_synth(&base).map_err(|e| e.to_string())?;
    base.dataset = Some(dir.path().join("data/series.csv"));
    let run = |name: &str| {
        let mut cfg = base.clone();
        cfg.out = dir.path().join(name);
        let out = cmd_train(&cfg).map_err(|e| e.to_string())?;
        let read = |p: &Path| std::fs::read(p).unwrap();
        Ok::<_, String>([read(&out.history), read(&out.pretrain_history), read(&out.checkpoint)])
    };
    let (a, b) = (run("a")?, run("b")?);
    for (i, name) in ["history", "pretrain history", "checkpoint"].iter().enumerate() {
        ensure(a[i] == b[i], || format!("{name} differs between runs"))?;
    }
    Ok(format!(
        "history, pretrain history and {}-byte checkpoint identical",
        a[2].len()
    ))
}

// ---------------------------------------------------------------------------

fn run(n: usize, f: impl FnOnce() -> Outcome) -> bool {
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panicked: {msg}"))
    });
    let passed = outcome.is_ok();
    match outcome {
        Ok(d) => println!("criterion {n}: PASS {d}"),
        Err(d) => println!("criterion {n}: FAIL {d}"),
    }
    passed
}

fn main() {
    // Panics are reported on the criterion's line instead.
    std::panic::set_hook(Box::new(|_| {}));
    let mut passed = vec![
        run(1, gradient_suite),
        run(2, adjointness),
        run(3, metric_oracles),
        run(4, window_count),
        run(5, zipper_identity),
        run(6, round_trips),
    ];

    let dir = tempfile::tempdir().unwrap();
    let mut desk = None;
    passed.push(run(7, || pretraining_learns(dir.path(), &mut desk)));
    let needs_desk = || Err::<String, _>("desk model unavailable".to_string());
    passed.push(match &desk {
        Some(d) => run(8, || gan_stability(d)),
        None => run(8, needs_desk),
    });
    passed.push(run(9, shape_contract));
    passed.push(run(10, saliency_correctness));
    passed.push(match &desk {
        Some(d) => run(11, || anomaly_harness(d)),
        None => run(11, needs_desk),
    });
    passed.push(run(12, determinism));

    let failed = passed.iter().filter(|p| !**p).count();
    println!("{} of {} criteria passed", passed.len() - failed, passed.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
