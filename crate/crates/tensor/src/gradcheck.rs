//! Central finite-difference gradient checking.
//!
//! The numeric side only ever evaluates forward passes, so it stays
//! independent of the reverse-mode rules it is used to verify.

use crate::error::Result;
use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    /// Worst element-wise relative error per input.
    pub max_rel_error: Vec<f64>,
    pub analytic: Vec<Tensor<f64>>,
    pub numeric: Vec<Tensor<f64>>,
}

impl GradCheckReport {
    pub fn worst(&self) -> f64 {
        self.max_rel_error.iter().copied().fold(0.0, f64::max)
    }
}

/// Compares reverse-mode gradients of a scalar function against central
/// differences with step `h`.
///
/// The relative error of entry `i` is `|a_i - n_i| / max(|a_i|, |n_i|, 1e-3 * max_j |n_j|, 1e-10)`,
/// so entries that are tiny relative to the rest of the tensor are judged
/// against the tensor's gradient scale rather than against zero.
pub fn check_gradients<F>(inputs: &[Tensor<f64>], h: f64, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let root = f(&mut g, &vars)?;
    g.backward(root)?;
    let analytic: Vec<Tensor<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(v, t)| g.grad(*v).unwrap_or_else(|| Tensor::zeros(t.shape()).unwrap()))
        .collect();

    let eval = |probe: &[Tensor<f64>]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = probe.iter().map(|t| g.constant(t.clone())).collect();
        let root = f(&mut g, &vars)?;
        Ok(g.value(root).item())
    };

    let mut numeric = Vec::with_capacity(inputs.len());
    let mut max_rel_error = Vec::with_capacity(inputs.len());
    let mut probe = inputs.to_vec();
    for k in 0..inputs.len() {
        let mut num = vec![0.0; inputs[k].numel()];
        for (i, slot) in num.iter_mut().enumerate() {
            let orig = inputs[k].data()[i];
            probe[k].data_mut()[i] = orig + h;
            let up = eval(&probe)?;
            probe[k].data_mut()[i] = orig - h;
            let down = eval(&probe)?;
            probe[k].data_mut()[i] = orig;
            *slot = (up - down) / (2.0 * h);
        }
        let scale = num.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let floor = (1e-3 * scale).max(1e-10);
        let worst = analytic[k]
            .data()
            .iter()
            .zip(&num)
            .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
            .fold(0.0, f64::max);
        max_rel_error.push(worst);
        numeric.push(Tensor::new(inputs[k].shape(), num)?);
    }
    Ok(GradCheckReport {
        max_rel_error,
        analytic,
        numeric,
    })
}
