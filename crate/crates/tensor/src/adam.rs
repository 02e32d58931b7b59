use crate::scalar::Scalar;

/// Moment estimates of one parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub first_moment: Vec<T>,
    pub second_moment: Vec<T>,
    pub step_count: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(len: usize) -> Self {
        AdamState {
            first_moment: vec![T::zero(); len],
            second_moment: vec![T::zero(); len],
            step_count: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// One bias-corrected Adam descent step: `p -= lr * m_hat / (sqrt(v_hat) + eps)`.
///
/// Ascent is obtained by the caller negating its objective.
pub fn adam_step<T: Scalar>(params: &mut [T], grads: &[T], state: &mut AdamState<T>, cfg: &AdamConfig, lr: f64) {
    assert_eq!(params.len(), grads.len(), "adam_step: parameter/gradient length");
    assert_eq!(params.len(), state.first_moment.len(), "adam_step: state length");
    state.step_count += 1;
    let t = state.step_count as i32;
    let b1 = T::from_f64_lossy(cfg.beta1);
    let b2 = T::from_f64_lossy(cfg.beta2);
    let c1 = T::from_f64_lossy(1.0 - cfg.beta1.powi(t));
    let c2 = T::from_f64_lossy(1.0 - cfg.beta2.powi(t));
    let eps = T::from_f64_lossy(cfg.epsilon);
    let lr = T::from_f64_lossy(lr);
    let one = T::one();
    for i in 0..params.len() {
        let g = grads[i];
        let m = b1 * state.first_moment[i] + (one - b1) * g;
        let v = b2 * state.second_moment[i] + (one - b2) * g * g;
        state.first_moment[i] = m;
        state.second_moment[i] = v;
        let m_hat = m / c1;
        let v_hat = v / c2;
        params[i] = params[i] - lr * m_hat / (v_hat.sqrt() + eps);
    }
}

/// Adam over an ordered list of parameter tensors.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub config: AdamConfig,
    pub lr: f64,
    states: Vec<AdamState<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(lr: f64, config: AdamConfig, param_lens: impl IntoIterator<Item = usize>) -> Self {
        Adam {
            config,
            lr,
            states: param_lens.into_iter().map(AdamState::new).collect(),
        }
    }

    pub fn states(&self) -> &[AdamState<T>] {
        &self.states
    }

    /// Applies one step to each `(param, grad)` pair, in registration order.
    pub fn step<'a>(&mut self, pairs: impl IntoIterator<Item = (&'a mut [T], &'a [T])>) {
        let mut count = 0;
        for ((p, g), st) in pairs.into_iter().zip(self.states.iter_mut()) {
            adam_step(p, g, st, &self.config, self.lr);
            count += 1;
        }
        assert_eq!(count, self.states.len(), "Adam::step: parameter count changed");
    }
}
