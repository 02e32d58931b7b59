use crate::graph::BatchStats;
use crate::scalar::Scalar;

pub const DEFAULT_BN_EPS: f64 = 1e-5;
pub const DEFAULT_BN_MOMENTUM: f64 = 0.9;

/// Exponential moving averages of per-channel batch statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct RunningStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

impl<T: Scalar> RunningStats<T> {
    pub fn new(channels: usize) -> Self {
        RunningStats {
            mean: vec![T::zero(); channels],
            var: vec![T::one(); channels],
        }
    }

    /// `running = momentum * running + (1 - momentum) * batch`, using the
    /// unbiased batch variance.
    pub fn update(&mut self, batch: &BatchStats<T>, momentum: f64) {
        let keep = T::from_f64_lossy(momentum);
        let take = T::one() - keep;
        let correction = if batch.count > 1 {
            T::from_usize(batch.count).unwrap() / T::from_usize(batch.count - 1).unwrap()
        } else {
            T::one()
        };
        for c in 0..self.mean.len() {
            self.mean[c] = keep * self.mean[c] + take * batch.mean[c];
            self.var[c] = keep * self.var[c] + take * batch.var[c] * correction;
        }
    }
}
