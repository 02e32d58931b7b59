//! Generator and discriminator objectives, built as graph nodes.

use mtsr_tensor::{Graph, Scalar, Var};

use crate::error::{MtsrError, Result};

/// Default clip applied to discriminator probabilities before any log.
pub const LOG_CLIP: f64 = 1e-7;

fn check_clip(clip: f64) -> Result<()> {
    if !(clip > 0.0 && clip <= 1e-3) {
        return Err(MtsrError::Config(format!("log clip {clip} outside (0, 1e-3]")));
    }
    Ok(())
}

/// Squared L2 distance per sample, `[N]`.
pub fn per_sample_sq_error<T: Scalar>(g: &mut Graph<T>, pred: Var, truth: Var) -> Result<Var> {
    if g.shape(pred) != g.shape(truth) {
        return Err(MtsrError::Dimension(format!(
            "prediction {:?} vs truth {:?}",
            g.shape(pred),
            g.shape(truth)
        )));
    }
    let d = g.sub(truth, pred)?;
    let sq = g.square(d);
    Ok(g.sum_per_sample(sq)?)
}

/// Batch mean of `||truth - pred||^2`.
pub fn mse_loss<T: Scalar>(g: &mut Graph<T>, pred: Var, truth: Var) -> Result<Var> {
    let e = per_sample_sq_error(g, pred, truth)?;
    Ok(g.mean(e))
}

/// Probabilities `[N]` or `[N, 1]` flattened to `[N]` and clipped to `[clip, hi]`.
fn clipped<T: Scalar>(g: &mut Graph<T>, p: Var, clip: f64, hi: T) -> Result<Var> {
    let n = g.shape(p).first().copied().unwrap_or(0);
    if n == 0 || g.value(p).numel() != n {
        return Err(MtsrError::Dimension(format!(
            "expected one probability per sample, got {:?}",
            g.shape(p)
        )));
    }
    let flat = g.reshape(p, &[n])?;
    Ok(g.clamp(flat, T::from_f64_lossy(clip), hi))
}

/// Discriminator objective (maximized): `mean log D(real) + mean log(1 - D(fake))`.
pub fn d_loss<T: Scalar>(g: &mut Graph<T>, d_real: Var, d_fake: Var, clip: f64) -> Result<Var> {
    check_clip(clip)?;
    let hi = T::one() - T::from_f64_lossy(clip);
    let real = clipped(g, d_real, clip, hi)?;
    let fake = clipped(g, d_fake, clip, hi)?;
    let log_real = g.log(real)?;
    let neg_fake = g.scale(fake, -T::one());
    let one_minus = g.add_scalar(neg_fake, T::one());
    let log_fake = g.log(one_minus)?;
    let a = g.mean(log_real);
    let b = g.mean(log_fake);
    Ok(g.add(a, b)?)
}

/// Generator objective (minimized): `mean (1 - 2 log D(G)) ||truth - pred||^2`.
pub fn g_loss<T: Scalar>(g: &mut Graph<T>, pred: Var, truth: Var, d_fake: Var, clip: f64) -> Result<Var> {
    check_clip(clip)?;
    let err = per_sample_sq_error(g, pred, truth)?;
    // Only log D(G) appears, so the upper clip is unnecessary and D(G) = 1 gives exactly the MSE.
    let fake = clipped(g, d_fake, clip, T::one())?;
    if g.shape(fake) != g.shape(err) {
        return Err(MtsrError::Dimension(
            "one discriminator output per sample required".into(),
        ));
    }
    let log_fake = g.log(fake)?;
    let scaled = g.scale(log_fake, T::from_f64_lossy(-2.0));
    let factor = g.add_scalar(scaled, T::one());
    let weighted = g.mul(factor, err)?;
    Ok(g.mean(weighted))
}

/// Weighted alternative: `mean ||truth - pred||^2 - 2 sigma^2 log D(G)`.
pub fn g_loss_sigma<T: Scalar>(
    g: &mut Graph<T>,
    pred: Var,
    truth: Var,
    d_fake: Var,
    sigma_sq: f64,
    clip: f64,
) -> Result<Var> {
    check_clip(clip)?;
    if !(sigma_sq >= 0.0) {
        return Err(MtsrError::Config(format!("sigma^2 {sigma_sq} must be non-negative")));
    }
    let err = per_sample_sq_error(g, pred, truth)?;
    // Only log D(G) appears, so the upper clip is unnecessary and D(G) = 1 gives exactly the MSE.
    let fake = clipped(g, d_fake, clip, T::one())?;
    if g.shape(fake) != g.shape(err) {
        return Err(MtsrError::Dimension(
            "one discriminator output per sample required".into(),
        ));
    }
    let log_fake = g.log(fake)?;
    let adv = g.scale(log_fake, T::from_f64_lossy(-2.0 * sigma_sq));
    let total = g.add(err, adv)?;
    Ok(g.mean(total))
}

#[cfg(test)]
mod tests {
    use super::*;
    use mtsr_tensor::Tensor;

    fn leaf(g: &mut Graph<f64>, shape: &[usize], v: &[f64]) -> Var {
        g.constant(Tensor::new(shape, v.to_vec()).unwrap())
    }

    #[test]
    fn mse_examples() {
        let mut g = Graph::new();
        let a = leaf(&mut g, &[1, 1, 2, 2], &[1.0, 2.0, 3.0, 4.0]);
        let b = leaf(&mut g, &[1, 1, 2, 2], &[1.0, 2.0, 5.0, 4.0]);
        let same = mse_loss(&mut g, a, a).unwrap();
        let diff = mse_loss(&mut g, a, b).unwrap();
        assert_eq!(g.value(same).item(), 0.0);
        assert_eq!(g.value(diff).item(), 4.0);
        let c = leaf(&mut g, &[1, 4], &[0.0; 4]);
        assert!(mse_loss(&mut g, a, c).is_err());
    }

    #[test]
    fn d_loss_examples() {
        let mut g = Graph::new();
        let half = leaf(&mut g, &[3, 1], &[0.5; 3]);
        let l = d_loss(&mut g, half, half, LOG_CLIP).unwrap();
        assert!((g.value(l).item() - 2.0 * 0.5f64.ln()).abs() < 1e-12);
        let real = leaf(&mut g, &[2], &[1.0, 1.0]);
        let fake = leaf(&mut g, &[2], &[0.0, 0.0]);
        let sup = d_loss(&mut g, real, fake, LOG_CLIP).unwrap();
        assert!(g.value(sup).item().abs() < 1e-6);
        assert!(g.value(sup).item().is_finite());
        assert!(d_loss(&mut g, real, fake, 0.1).is_err());
    }

    #[test]
    fn g_loss_examples() {
        let mut g = Graph::new();
        let p = leaf(&mut g, &[1, 1, 1, 2], &[1.0, 0.0]);
        let t = leaf(&mut g, &[1, 1, 1, 2], &[0.0, 0.0]);
        let half = leaf(&mut g, &[1, 1], &[0.5]);
        let one = leaf(&mut g, &[1, 1], &[1.0]);
        let l = g_loss(&mut g, p, t, half, LOG_CLIP).unwrap();
        assert!((g.value(l).item() - (1.0 + 2.0 * 2f64.ln())).abs() < 1e-12);
        let l0 = g_loss(&mut g, p, p, half, LOG_CLIP).unwrap();
        assert_eq!(g.value(l0).item(), 0.0);
        let l1 = g_loss(&mut g, p, t, one, LOG_CLIP).unwrap();
        let m = mse_loss(&mut g, p, t).unwrap();
        assert_eq!(g.value(l1).item(), g.value(m).item());
        let ls = g_loss_sigma(&mut g, p, p, half, 1.0, LOG_CLIP).unwrap();
        assert!((g.value(ls).item() - 2.0 * 2f64.ln()).abs() < 1e-12);
        let l_zero = g_loss_sigma(&mut g, p, t, half, 0.0, LOG_CLIP).unwrap();
        assert_eq!(g.value(l_zero).item(), 1.0);
    }
}
