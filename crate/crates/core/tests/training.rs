use std::sync::Arc;

use mtsr::datapipe::{build_dataset, synth_series, Dataset, DatasetSpec, LayoutKind, SplitSpec, SynthConfig};
use mtsr::networks::{DiscriminatorSpec, InstanceConfig, ZipNetSpec};
use mtsr::training::{
    d_loss, g_loss, load_checkpoint, load_checkpoint_for, mse_loss, save_checkpoint, Checkpoint, GanModel, TrainConfig,
    Trainer,
};
use mtsr::MtsrError;
use mtsr_tensor::gradcheck::check_gradients;
use mtsr_tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const CLIP: f64 = 1e-7;

fn rand_t(shape: &[usize], lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

#[test]
fn losses_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for case in 0..10 {
        let pred = rand_t(&[3, 1, 4, 4], -1.0, 1.0, &mut rng);
        let truth = rand_t(&[3, 1, 4, 4], -1.0, 1.0, &mut rng);
        let d_fake = rand_t(&[3, 1], 0.05, 0.95, &mut rng);
        let d_real = rand_t(&[3, 1], 0.05, 0.95, &mut rng);

        let r = check_gradients(&[pred.clone(), d_fake.clone()], 1e-6, |g, v| {
            let t = g.constant(truth.clone());
            Ok(g_loss(g, v[0], t, v[1], CLIP).unwrap())
        })
        .unwrap();
        assert!(r.worst() < 1e-4, "g_loss case {case}: {:?}", r.max_rel_error);

        let r = check_gradients(&[d_real, d_fake], 1e-6, |g, v| Ok(d_loss(g, v[0], v[1], CLIP).unwrap())).unwrap();
        assert!(r.worst() < 1e-4, "d_loss case {case}: {:?}", r.max_rel_error);

        let r = check_gradients(&[pred], 1e-6, |g, v| {
            let t = g.constant(truth.clone());
            Ok(mse_loss(g, v[0], t).unwrap())
        })
        .unwrap();
        assert!(r.worst() < 1e-4, "mse case {case}: {:?}", r.max_rel_error);
    }
}

fn instance() -> InstanceConfig {
    InstanceConfig::new(LayoutKind::Uniform(2), 8, 2).unwrap()
}

fn model<T: mtsr_tensor::Scalar>(seed: u64) -> GanModel<T> {
    let spec = ZipNetSpec::scaled(2, 2, 2, 3, [3, 3, 1]).unwrap();
    GanModel::build(instance(), spec, DiscriminatorSpec::vgg(8, 2), seed).unwrap()
}

fn dataset() -> Dataset {
    let series = synth_series(&SynthConfig {
        rows: 12,
        cols: 12,
        frames: 20,
        seed: 4,
        ..SynthConfig::default()
    })
    .unwrap();
    let spec = DatasetSpec {
        layout: LayoutKind::Uniform(2),
        temporal_length: 2,
        window_side: 8,
        offset: 2,
        split: SplitSpec::default(),
    };
    build_dataset(Arc::new(series), &spec).unwrap()
}

fn config(pretrain: usize, gan: usize) -> TrainConfig {
    TrainConfig {
        batch_size: 4,
        learning_rate: 1e-3,
        pretrain_epochs: pretrain,
        gan_epochs: gan,
        seed: 3,
        batches_per_epoch: Some(4),
        ..TrainConfig::default()
    }
}

fn checkpoint() -> Checkpoint {
    let ds = dataset();
    Checkpoint::from_model(&model::<f64>(5), ds.norm, config(1, 1), 3)
}

#[test]
fn checkpoint_round_trip_is_bitwise() {
    let ckpt = checkpoint();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    save_checkpoint(&path, &ckpt).unwrap();
    let back = load_checkpoint(&path).unwrap();
    assert_eq!(back, ckpt);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = Tensor::<f32>::new(
        &[2, 1, 2, 4, 4],
        (0..64).map(|_| rng.random_range(-1.0f32..1.0)).collect(),
    )
    .unwrap();
    let (a, b) = (ckpt.model.generate(&x).unwrap(), back.model.generate(&x).unwrap());
    assert!(a.data().iter().zip(b.data()).all(|(p, q)| p.to_bits() == q.to_bits()));

    // Saving the loaded copy reproduces the file byte for byte.
    let again = dir.path().join("again.ckpt");
    save_checkpoint(&again, &back).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&again).unwrap());
}

#[test]
fn corrupt_checkpoints_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    save_checkpoint(&path, &checkpoint()).unwrap();
    let good = std::fs::read(&path).unwrap();
    let write = |bytes: &[u8]| {
        let p = dir.path().join("bad.ckpt");
        std::fs::write(&p, bytes).unwrap();
        load_checkpoint(&p).unwrap_err()
    };

    let mut b = good.clone();
    b[0] = b'X';
    assert!(matches!(write(&b), MtsrError::Format(_)));

    let mut b = good.clone();
    b[8..12].copy_from_slice(&7u32.to_le_bytes());
    assert!(matches!(write(&b), MtsrError::Version { found: 7, expected: 1 }));

    assert!(matches!(write(&good[..good.len() - 3]), MtsrError::Truncated(_)));
    assert!(matches!(write(&good[..15]), MtsrError::Truncated(_)));

    // Rename one tensor without changing the manifest length.
    let text = String::from_utf8_lossy(&good).into_owned();
    let at = text.find("\"head.weight\"").unwrap();
    let mut b = good.clone();
    b[at + 1..at + 5].copy_from_slice(b"tail");
    assert!(matches!(write(&b), MtsrError::Manifest(_)));

    let other = InstanceConfig::new(LayoutKind::Uniform(2), 8, 3).unwrap();
    assert!(matches!(
        load_checkpoint_for(&path, &other).unwrap_err(),
        MtsrError::Config(_)
    ));
    assert!(load_checkpoint_for(&path, &instance()).is_ok());
}

#[test]
fn pretraining_repeats_under_a_seed_and_reduces_loss() {
    let ds = dataset();
    let run = || {
        let mut m = model::<f64>(1);
        let mut cfg = config(8, 0);
        cfg.convergence_tol = 0.0;
        let report = Trainer::new(cfg, &m)
            .unwrap()
            .pretrain(&mut m, &ds.train, &ds.norm)
            .unwrap();
        (m, report)
    };
    let (m1, r1) = run();
    let (m2, r2) = run();
    assert_eq!(m1, m2);
    assert_eq!(r1.losses, r2.losses);
    assert_eq!(r1.losses.len(), 8);
    assert!(r1.losses.last().unwrap() < &r1.losses[0], "{:?}", r1.losses);
}

#[test]
fn zero_epochs_leave_the_model_untouched() {
    let ds = dataset();
    let mut m = model::<f64>(1);
    let before = m.clone();
    let mut t = Trainer::new(config(0, 0), &m).unwrap();
    assert!(t.pretrain(&mut m, &ds.train, &ds.norm).unwrap().losses.is_empty());
    assert!(t.train_gan(&mut m, &ds.train, &ds.norm).unwrap().history.is_empty());
    assert_eq!(m, before);
}

#[test]
fn adversarial_epochs_stay_finite() {
    let ds = dataset();
    let mut m = model::<f64>(2);
    let mut cfg = config(2, 3);
    cfg.gan_learning_rate = Some(1e-4);
    let mut t = Trainer::new(cfg, &m).unwrap();
    t.pretrain(&mut m, &ds.train, &ds.norm).unwrap();
    let report = t.train_gan(&mut m, &ds.train, &ds.norm).unwrap();
    assert_eq!(report.history.len(), 6);
    assert!(report.history.iter().all(|e| e.loss.is_finite()));
    let (lo, hi) = report.d_output_range;
    assert!(lo > 0.0 && hi < 1.0, "{lo} {hi}");
}

#[test]
fn batch_larger_than_split_is_a_config_error() {
    let ds = dataset();
    let mut m = model::<f64>(0);
    let mut cfg = config(1, 0);
    cfg.batch_size = ds.train.len() + 1;
    let err = Trainer::new(cfg, &m)
        .unwrap()
        .pretrain(&mut m, &ds.train, &ds.norm)
        .unwrap_err();
    assert!(matches!(err, MtsrError::Config(_)));
    let bad = TrainConfig {
        learning_rate: -1.0,
        ..TrainConfig::default()
    };
    assert!(matches!(Trainer::new(bad, &m), Err(MtsrError::Config(_))));
    let bad = TrainConfig {
        gan_learning_rate: Some(0.0),
        ..TrainConfig::default()
    };
    assert!(matches!(Trainer::new(bad, &m), Err(MtsrError::Config(_))));
}
