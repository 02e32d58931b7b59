//! Named parameter storage shared by all models, and per-pass graph binding.

use mtsr_tensor::{BatchStats, Graph, RunningStats, Scalar, Tensor, Var};
use rand::Rng;

use crate::error::{MtsrError, Result};

/// Index of a tensor inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    /// Updated by the optimizer.
    Weight,
    /// Running statistics; carried through checkpoints, never differentiated.
    Buffer,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamStore<T> {
    names: Vec<String>,
    kinds: Vec<ParamKind>,
    values: Vec<Tensor<T>>,
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            names: Vec::new(),
            kinds: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>, kind: ParamKind) -> ParamId {
        self.names.push(name.into());
        self.kinds.push(kind);
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn kind(&self, id: ParamId) -> ParamKind {
        self.kinds[id.0]
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.values[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn weight_ids(&self) -> Vec<ParamId> {
        self.ids().filter(|&id| self.kind(id) == ParamKind::Weight).collect()
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    /// Trainable tensors in store order.
    pub fn weights_mut(&mut self) -> impl Iterator<Item = &mut Tensor<T>> {
        self.values
            .iter_mut()
            .zip(&self.kinds)
            .filter(|(_, k)| **k == ParamKind::Weight)
            .map(|(v, _)| v)
    }

    /// Number of trainable scalars.
    pub fn weight_count(&self) -> usize {
        self.weight_ids().iter().map(|&id| self.get(id).numel()).sum()
    }

    /// Sets every trainable tensor whose name satisfies `pred` to zero.
    pub fn zero_weights(&mut self, pred: impl Fn(&str) -> bool) {
        for i in 0..self.values.len() {
            if self.kinds[i] == ParamKind::Weight && pred(&self.names[i]) {
                self.values[i].data_mut().iter_mut().for_each(|v| *v = T::zero());
            }
        }
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            names: self.names.clone(),
            kinds: self.kinds.clone(),
            values: self.values.iter().map(|t| t.cast()).collect(),
        }
    }

    /// Overwrites all values from `other`, which must hold the same names and shapes.
    pub fn assign(&mut self, other: &ParamStore<T>) -> Result<()> {
        if self.names != other.names {
            return Err(MtsrError::Manifest("parameter names differ".into()));
        }
        for (i, v) in other.values.iter().enumerate() {
            if v.shape() != self.values[i].shape() {
                return Err(MtsrError::Manifest(format!(
                    "{}: shape {:?}, expected {:?}",
                    self.names[i],
                    v.shape(),
                    self.values[i].shape()
                )));
            }
        }
        self.values = other.values.clone();
        Ok(())
    }

    /// Folds training-mode batch statistics into the running buffers.
    pub fn update_running(&mut self, stats: &[BnUpdate<T>], momentum: f64) {
        for u in stats {
            let mut rs = RunningStats {
                mean: self.get(u.mean).data().to_vec(),
                var: self.get(u.var).data().to_vec(),
            };
            rs.update(&u.stats, momentum);
            self.get_mut(u.mean).data_mut().copy_from_slice(&rs.mean);
            self.get_mut(u.var).data_mut().copy_from_slice(&rs.var);
        }
    }
}

/// Batch statistics of one batch-norm layer, addressed to its running buffers.
#[derive(Clone, Debug)]
pub struct BnUpdate<T> {
    pub mean: ParamId,
    pub var: ParamId,
    pub stats: BatchStats<T>,
}

/// He (fan-in) initialized kernel.
pub fn he_init<T: Scalar, R: Rng + ?Sized>(shape: &[usize], fan_in: usize, rng: &mut R) -> Result<Tensor<T>> {
    Ok(Tensor::randn(shape, (2.0 / fan_in.max(1) as f64).sqrt(), rng)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics, collected for the running averages.
    Train,
    /// Running statistics.
    Infer,
}

/// One forward pass: the graph, the store's tensors bound as graph nodes,
/// and the batch statistics gathered on the way.
pub struct Forward<'a, T> {
    pub g: &'a mut Graph<T>,
    pub store: &'a ParamStore<T>,
    pub mode: Mode,
    pub lrelu_alpha: T,
    vars: Vec<Var>,
    bn: Vec<BnUpdate<T>>,
}

impl<'a, T: Scalar> Forward<'a, T> {
    /// Binds every tensor of `store` into `g`. Weights require gradients
    /// when `grad` is set; buffers never do.
    pub fn new(g: &'a mut Graph<T>, store: &'a ParamStore<T>, mode: Mode, grad: bool) -> Self {
        let vars = store
            .ids()
            .map(|id| match store.kind(id) {
                ParamKind::Weight => g.leaf(store.get(id).clone(), grad),
                ParamKind::Buffer => g.constant(store.get(id).clone()),
            })
            .collect();
        Forward {
            g,
            store,
            mode,
            lrelu_alpha: T::from_f64_lossy(0.1),
            vars,
            bn: Vec::new(),
        }
    }

    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    pub(crate) fn push_bn(&mut self, update: BnUpdate<T>) {
        self.bn.push(update);
    }

    /// Parameter nodes (indexed like the store) and collected batch statistics.
    pub fn finish(self) -> (Vec<Var>, Vec<BnUpdate<T>>) {
        (self.vars, self.bn)
    }
}

/// Gradients of every weight after `backward`, in store order (`None` for buffers).
pub fn collect_grads<T: Scalar>(g: &Graph<T>, store: &ParamStore<T>, vars: &[Var]) -> Vec<Option<Tensor<T>>> {
    store
        .ids()
        .map(|id| match store.kind(id) {
            ParamKind::Weight => g.grad(vars[id.index()]),
            ParamKind::Buffer => None,
        })
        .collect()
}
