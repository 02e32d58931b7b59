//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every operation in creation order, so the tape is
//! already topologically sorted and `backward` is a single reverse sweep.
//! Graphs are meant to be short-lived: build one per forward pass, call
//! [`Graph::backward`], read the leaf gradients, drop it.

use crate::conv::{self, Conv2dConfig, Conv3dConfig, DeconvConfig, Geometry, Padding};
use crate::error::{Result, TensorError};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Statistics used or produced by [`Graph::batchnorm`].
pub enum BatchNormMode<'a, T> {
    /// Normalize with the batch's own per-channel statistics.
    Train,
    /// Normalize with fixed statistics (running averages).
    Infer { mean: &'a [T], var: &'a [T] },
}

/// Per-channel biased moments of one training-mode batch-norm call.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
    /// Elements reduced per channel (batch x spatial).
    pub count: usize,
}

enum Op<T> {
    Leaf,
    Conv {
        x: Var,
        w: Var,
        geom: Geometry,
    },
    Deconv {
        y: Var,
        w: Var,
        geom: Geometry,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<T>,
        inv_std: Vec<T>,
        batch_stats: bool,
    },
    LRelu {
        x: Var,
        alpha: T,
    },
    Relu {
        x: Var,
    },
    Sigmoid {
        x: Var,
    },
    Add {
        a: Var,
        b: Var,
    },
    Sub {
        a: Var,
        b: Var,
    },
    Mul {
        a: Var,
        b: Var,
    },
    Scale {
        x: Var,
        c: T,
    },
    Shift {
        x: Var,
    },
    Square {
        x: Var,
    },
    Log {
        x: Var,
    },
    Clamp {
        x: Var,
        lo: T,
        hi: T,
    },
    Reshape {
        x: Var,
    },
    Sum {
        x: Var,
    },
    Mean {
        x: Var,
    },
    SumPerSample {
        x: Var,
    },
    GlobalAvgPool {
        x: Var,
    },
    Linear {
        x: Var,
        w: Var,
        b: Var,
    },
    ChannelBias {
        x: Var,
        b: Var,
    },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn same_shape(op: &'static str, a: &[usize], b: &[usize]) -> Result<()> {
    if a != b {
        return Err(TensorError::dim(op, "all", format!("{a:?} vs {b:?}")));
    }
    Ok(())
}

fn accumulate<T: Scalar>(slot: &mut Option<Vec<T>>, contribution: Vec<T>) {
    match slot {
        Some(existing) => {
            for (e, c) in existing.iter_mut().zip(contribution) {
                *e = *e + c;
            }
        }
        None => *slot = Some(contribution),
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            grads: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Adds a leaf. Only leaves created with `requires_grad` receive gradients.
    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient of the last `backward` root w.r.t. a leaf, if one reached it.
    pub fn grad(&self, v: Var) -> Option<Tensor<T>> {
        let g = self.grads.get(v.0)?.as_ref()?;
        Some(Tensor::new(self.shape(v), g.clone()).expect("gradient matches value shape"))
    }

    // ---- convolutions -------------------------------------------------

    /// 3D cross-correlation of `x[N,Cin,D,H,W]` with `kernel[Cout,Cin,kD,kH,kW]`.
    pub fn conv3d(&mut self, x: Var, kernel: Var, cfg: Conv3dConfig) -> Result<Var> {
        let geom = Geometry::conv("conv3d", self.shape(x), self.shape(kernel), cfg.stride, cfg.padding)?;
        let out = conv::conv_forward(&geom, self.value(x).data(), self.value(kernel).data());
        let [d, h, w] = geom.output;
        let value = Tensor::new(&[geom.batch, geom.cout, d, h, w], out)?;
        Ok(self.push(value, Op::Conv { x, w: kernel, geom }, &[x, kernel]))
    }

    /// 2D cross-correlation of `x[N,Cin,H,W]` with `kernel[Cout,Cin,kH,kW]`.
    pub fn conv2d(&mut self, x: Var, kernel: Var, cfg: Conv2dConfig) -> Result<Var> {
        let xs = self.shape(x);
        let ks = self.shape(kernel);
        if xs.len() != 4 || ks.len() != 4 {
            return Err(TensorError::dim(
                "conv2d",
                "rank",
                format!("expected 4-d input and kernel, got {xs:?} and {ks:?}"),
            ));
        }
        let x5 = [xs[0], xs[1], 1, xs[2], xs[3]];
        let k5 = [ks[0], ks[1], 1, ks[2], ks[3]];
        let padding = match cfg.padding {
            Padding::Valid => Padding::Valid,
            Padding::Same => Padding::Same,
            Padding::Explicit([ph, pw]) => Padding::Explicit([0, ph, pw]),
        };
        let stride = [1, cfg.stride[0], cfg.stride[1]];
        let geom = Geometry::conv("conv2d", &x5, &k5, stride, padding)?;
        let out = conv::conv_forward(&geom, self.value(x).data(), self.value(kernel).data());
        let [_, h, w] = geom.output;
        let value = Tensor::new(&[geom.batch, geom.cout, h, w], out)?;
        Ok(self.push(value, Op::Conv { x, w: kernel, geom }, &[x, kernel]))
    }

    /// Transposed 3D convolution of `x[N,Cin,D,H,W]` with `kernel[Cin,Cout,kD,kH,kW]`,
    /// the adjoint of `conv3d` with the same kernel, stride and padding.
    pub fn deconv3d(&mut self, x: Var, kernel: Var, cfg: DeconvConfig) -> Result<Var> {
        let geom = Geometry::deconv(self.shape(x), self.shape(kernel), &cfg)?;
        let out = conv::deconv_forward(&geom, self.value(x).data(), self.value(kernel).data());
        let [d, h, w] = geom.input;
        let value = Tensor::new(&[geom.batch, geom.cin, d, h, w], out)?;
        Ok(self.push(value, Op::Deconv { y: x, w: kernel, geom }, &[x, kernel]))
    }

    // ---- normalization ------------------------------------------------

    /// Per-channel normalization over every axis but axis 1, then `gamma * xhat + beta`.
    ///
    /// In [`BatchNormMode::Train`] the batch statistics are returned so the
    /// caller can fold them into running averages.
    pub fn batchnorm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        mode: BatchNormMode<'_, T>,
        eps: T,
    ) -> Result<(Var, Option<BatchStats<T>>)> {
        const OP: &str = "batchnorm";
        if !(eps > T::zero()) {
            return Err(TensorError::arg(OP, "eps must be positive"));
        }
        let xs = self.shape(x).to_vec();
        if xs.len() < 2 {
            return Err(TensorError::dim(OP, "rank", format!("need [N, C, ...], got {xs:?}")));
        }
        let (n, c) = (xs[0], xs[1]);
        let spatial: usize = xs[2..].iter().product();
        let count = n * spatial;
        if count == 0 {
            return Err(TensorError::arg(OP, "zero-size batch"));
        }
        for (name, v) in [("gamma", gamma), ("beta", beta)] {
            if self.shape(v) != [c] {
                return Err(TensorError::dim(
                    OP,
                    "channels",
                    format!("{name} has shape {:?}, expected [{c}]", self.shape(v)),
                ));
            }
        }
        let data = self.value(x).data();
        let (mean, var, batch_stats) = match mode {
            BatchNormMode::Train => {
                let mut mean = vec![T::zero(); c];
                let mut var = vec![T::zero(); c];
                let cnt = T::from_usize(count).unwrap();
                for ch in 0..c {
                    let mut s = T::zero();
                    for b in 0..n {
                        let off = (b * c + ch) * spatial;
                        s = s + data[off..off + spatial].iter().copied().sum::<T>();
                    }
                    let m = s / cnt;
                    let mut q = T::zero();
                    for b in 0..n {
                        let off = (b * c + ch) * spatial;
                        for &v in &data[off..off + spatial] {
                            q = q + (v - m) * (v - m);
                        }
                    }
                    mean[ch] = m;
                    var[ch] = q / cnt;
                }
                (mean, var, true)
            }
            BatchNormMode::Infer { mean, var } => {
                if mean.len() != c || var.len() != c {
                    return Err(TensorError::dim(
                        OP,
                        "channels",
                        format!("running statistics hold {} entries, expected {c}", mean.len()),
                    ));
                }
                (mean.to_vec(), var.to_vec(), false)
            }
        };
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let g = self.value(gamma).data();
        let bt = self.value(beta).data();
        let mut xhat = vec![T::zero(); data.len()];
        let mut out = vec![T::zero(); data.len()];
        for b in 0..n {
            for ch in 0..c {
                let off = (b * c + ch) * spatial;
                for i in off..off + spatial {
                    let h = (data[i] - mean[ch]) * inv_std[ch];
                    xhat[i] = h;
                    out[i] = g[ch] * h + bt[ch];
                }
            }
        }
        let stats = batch_stats.then(|| BatchStats {
            mean: mean.clone(),
            var: var.clone(),
            count,
        });
        let value = Tensor::new(&xs, out)?;
        let v = self.push(
            value,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats,
            },
            &[x, gamma, beta],
        );
        Ok((v, stats))
    }

    // ---- element-wise -------------------------------------------------

    /// Leaky ReLU: `x` for `x >= 0`, `alpha * x` otherwise.
    pub fn lrelu(&mut self, x: Var, alpha: T) -> Result<Var> {
        if !(alpha > T::zero()) {
            return Err(TensorError::arg("lrelu", "alpha must be positive"));
        }
        let value = self.value(x).map(|v| if v >= T::zero() { v } else { alpha * v });
        Ok(self.push(value, Op::LRelu { x, alpha }, &[x]))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v.max(T::zero()));
        self.push(value, Op::Relu { x }, &[x])
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| {
            // split by sign so neither branch overflows
            if v >= T::zero() {
                T::one() / (T::one() + (-v).exp())
            } else {
                let e = v.exp();
                e / (T::one() + e)
            }
        });
        self.push(value, Op::Sigmoid { x }, &[x])
    }

    fn zip(&self, op: &'static str, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Result<Tensor<T>> {
        same_shape(op, self.shape(a), self.shape(b))?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Tensor::new(self.shape(a), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.zip("add", a, b, |x, y| x + y)?;
        Ok(self.push(value, Op::Add { a, b }, &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.zip("sub", a, b, |x, y| x - y)?;
        Ok(self.push(value, Op::Sub { a, b }, &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.zip("mul", a, b, |x, y| x * y)?;
        Ok(self.push(value, Op::Mul { a, b }, &[a, b]))
    }

    pub fn scale(&mut self, x: Var, c: T) -> Var {
        let value = self.value(x).map(|v| v * c);
        self.push(value, Op::Scale { x, c }, &[x])
    }

    pub fn add_scalar(&mut self, x: Var, c: T) -> Var {
        let value = self.value(x).map(|v| v + c);
        self.push(value, Op::Shift { x }, &[x])
    }

    pub fn square(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v * v);
        self.push(value, Op::Square { x }, &[x])
    }

    /// Natural log; inputs must be strictly positive.
    pub fn log(&mut self, x: Var) -> Result<Var> {
        if self.value(x).data().iter().any(|&v| !(v > T::zero())) {
            return Err(TensorError::arg("log", "input must be strictly positive"));
        }
        let value = self.value(x).map(|v| v.ln());
        Ok(self.push(value, Op::Log { x }, &[x]))
    }

    /// Clamps into `[lo, hi]`; the gradient is zero where clamping was active.
    pub fn clamp(&mut self, x: Var, lo: T, hi: T) -> Var {
        let value = self.value(x).map(|v| v.max(lo).min(hi));
        self.push(value, Op::Clamp { x, lo, hi }, &[x])
    }

    // ---- shape & reductions -------------------------------------------

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).reshape(shape)?;
        Ok(self.push(value, Op::Reshape { x }, &[x]))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().copied().sum::<T>();
        self.push(Tensor::scalar(s), Op::Sum { x }, &[x])
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let s = v.data().iter().copied().sum::<T>() / T::from_usize(v.numel()).unwrap();
        self.push(Tensor::scalar(s), Op::Mean { x }, &[x])
    }

    /// `[N, ...] -> [N]`, summing each sample.
    pub fn sum_per_sample(&mut self, x: Var) -> Result<Var> {
        let shape = self.shape(x);
        if shape.is_empty() {
            return Err(TensorError::dim("sum_per_sample", "rank", "scalar input"));
        }
        let n = shape[0];
        let per = self.value(x).numel() / n;
        let data = self
            .value(x)
            .data()
            .chunks(per)
            .map(|c| c.iter().copied().sum::<T>())
            .collect();
        let value = Tensor::new(&[n], data)?;
        Ok(self.push(value, Op::SumPerSample { x }, &[x]))
    }

    /// `[N, C, ...] -> [N, C]`, averaging over the trailing axes.
    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if shape.len() < 3 {
            return Err(TensorError::dim("global_avg_pool", "rank", format!("{shape:?}")));
        }
        let spatial: usize = shape[2..].iter().product();
        let denom = T::from_usize(spatial).unwrap();
        let data = self
            .value(x)
            .data()
            .chunks(spatial)
            .map(|c| c.iter().copied().sum::<T>() / denom)
            .collect();
        let value = Tensor::new(&shape[..2], data)?;
        Ok(self.push(value, Op::GlobalAvgPool { x }, &[x]))
    }

    /// Affine map `x[N, I] -> x W^T + b`, with `w[O, I]` and `b[O]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xs, ws, bs) = (self.shape(x), self.shape(w), self.shape(b));
        if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[1] || bs != [ws[0]] {
            return Err(TensorError::dim(
                "linear",
                "features",
                format!("x {xs:?}, w {ws:?}, b {bs:?}"),
            ));
        }
        let (n, i, o) = (xs[0], xs[1], ws[0]);
        let mut out = vec![T::zero(); n * o];
        for row in 0..n {
            out[row * o..(row + 1) * o].copy_from_slice(self.value(b).data());
        }
        T::gemm(
            n,
            i,
            o,
            T::one(),
            self.value(x).data(),
            false,
            self.value(w).data(),
            true,
            T::one(),
            &mut out,
        );
        let value = Tensor::new(&[n, o], out)?;
        Ok(self.push(value, Op::Linear { x, w, b }, &[x, w, b]))
    }

    /// Adds `b[C]` along axis 1 of `x[N, C, ...]`.
    pub fn channel_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if shape.len() < 2 || self.shape(b) != [shape[1]] {
            return Err(TensorError::dim(
                "channel_bias",
                "channels",
                format!("x {shape:?}, b {:?}", self.shape(b)),
            ));
        }
        let spatial: usize = shape[2..].iter().product();
        let c = shape[1];
        let bias = self.value(b).data();
        let data = self
            .value(x)
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| v + bias[(i / spatial) % c])
            .collect();
        let value = Tensor::new(&shape, data)?;
        Ok(self.push(value, Op::ChannelBias { x, b }, &[x, b]))
    }

    // ---- reverse sweep ------------------------------------------------

    /// Computes `d root / d leaf` for every leaf created with `requires_grad`.
    ///
    /// Gradients from a previous call are discarded. Contributions reaching
    /// a node along several paths are summed.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        let root_shape = self.shape(root);
        if self.value(root).numel() != 1 {
            return Err(TensorError::NonScalarRoot(root_shape.to_vec()));
        }
        let mut grads: Vec<Option<Vec<T>>> = vec![None; self.nodes.len()];
        if self.nodes[root.0].requires_grad {
            grads[root.0] = Some(vec![T::one()]);
        }
        for id in (0..=root.0).rev() {
            let node = &self.nodes[id];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(dy) = grads[id].take() else {
                continue;
            };
            for (input, contribution) in self.local_grads(id, &dy) {
                if self.nodes[input.0].requires_grad {
                    accumulate(&mut grads[input.0], contribution);
                }
            }
        }
        self.grads = grads;
        Ok(())
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Vector-Jacobian products of node `id` for upstream gradient `dy`.
    fn local_grads(&self, id: usize, dy: &[T]) -> Vec<(Var, Vec<T>)> {
        let node = &self.nodes[id];
        let out = node.value.data();
        let mut res = Vec::with_capacity(3);
        match &node.op {
            Op::Leaf => {}
            Op::Conv { x, w, geom } => {
                let (dx, dw) = conv::conv_backward(
                    geom,
                    self.value(*x).data(),
                    self.value(*w).data(),
                    dy,
                    self.needs(*x),
                    self.needs(*w),
                );
                res.extend(dx.map(|g| (*x, g)));
                res.extend(dw.map(|g| (*w, g)));
            }
            Op::Deconv { y, w, geom } => {
                let (dyy, dw) = conv::deconv_backward(
                    geom,
                    self.value(*y).data(),
                    self.value(*w).data(),
                    dy,
                    self.needs(*y),
                    self.needs(*w),
                );
                res.extend(dyy.map(|g| (*y, g)));
                res.extend(dw.map(|g| (*w, g)));
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats,
            } => {
                let shape = self.shape(*x);
                let (n, c) = (shape[0], shape[1]);
                let spatial: usize = shape[2..].iter().product();
                let g = self.value(*gamma).data();
                let mut dgamma = vec![T::zero(); c];
                let mut dbeta = vec![T::zero(); c];
                for b in 0..n {
                    for ch in 0..c {
                        let off = (b * c + ch) * spatial;
                        for i in off..off + spatial {
                            dbeta[ch] = dbeta[ch] + dy[i];
                            dgamma[ch] = dgamma[ch] + dy[i] * xhat[i];
                        }
                    }
                }
                if self.needs(*x) {
                    let mut dx = vec![T::zero(); dy.len()];
                    let m = T::from_usize(n * spatial).unwrap();
                    for b in 0..n {
                        for ch in 0..c {
                            let off = (b * c + ch) * spatial;
                            let k = g[ch] * inv_std[ch];
                            for i in off..off + spatial {
                                dx[i] = if *batch_stats {
                                    k * (dy[i] - dbeta[ch] / m - xhat[i] * dgamma[ch] / m)
                                } else {
                                    k * dy[i]
                                };
                            }
                        }
                    }
                    res.push((*x, dx));
                }
                res.push((*gamma, dgamma));
                res.push((*beta, dbeta));
            }
            Op::LRelu { x, alpha } => {
                let xv = self.value(*x).data();
                let dx = xv
                    .iter()
                    .zip(dy)
                    .map(|(&v, &d)| if v >= T::zero() { d } else { *alpha * d })
                    .collect();
                res.push((*x, dx));
            }
            Op::Relu { x } => {
                let xv = self.value(*x).data();
                let dx = xv
                    .iter()
                    .zip(dy)
                    .map(|(&v, &d)| if v > T::zero() { d } else { T::zero() })
                    .collect();
                res.push((*x, dx));
            }
            Op::Sigmoid { x } => {
                let dx = out.iter().zip(dy).map(|(&s, &d)| d * s * (T::one() - s)).collect();
                res.push((*x, dx));
            }
            Op::Add { a, b } => {
                res.push((*a, dy.to_vec()));
                res.push((*b, dy.to_vec()));
            }
            Op::Sub { a, b } => {
                res.push((*a, dy.to_vec()));
                res.push((*b, dy.iter().map(|&d| -d).collect()));
            }
            Op::Mul { a, b } => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                res.push((*a, dy.iter().zip(bv).map(|(&d, &y)| d * y).collect()));
                res.push((*b, dy.iter().zip(av).map(|(&d, &x)| d * x).collect()));
            }
            Op::Scale { x, c } => res.push((*x, dy.iter().map(|&d| d * *c).collect())),
            Op::Shift { x } => res.push((*x, dy.to_vec())),
            Op::Square { x } => {
                let xv = self.value(*x).data();
                let two = T::one() + T::one();
                res.push((*x, dy.iter().zip(xv).map(|(&d, &v)| two * v * d).collect()));
            }
            Op::Log { x } => {
                let xv = self.value(*x).data();
                res.push((*x, dy.iter().zip(xv).map(|(&d, &v)| d / v).collect()));
            }
            Op::Clamp { x, lo, hi } => {
                let xv = self.value(*x).data();
                let dx = dy
                    .iter()
                    .zip(xv)
                    .map(|(&d, &v)| if v >= *lo && v <= *hi { d } else { T::zero() })
                    .collect();
                res.push((*x, dx));
            }
            Op::Reshape { x } => res.push((*x, dy.to_vec())),
            Op::Sum { x } => res.push((*x, vec![dy[0]; self.value(*x).numel()])),
            Op::Mean { x } => {
                let n = self.value(*x).numel();
                res.push((*x, vec![dy[0] / T::from_usize(n).unwrap(); n]));
            }
            Op::SumPerSample { x } => {
                let n = self.value(*x).numel();
                let per = n / dy.len();
                res.push((*x, (0..n).map(|i| dy[i / per]).collect()));
            }
            Op::GlobalAvgPool { x } => {
                let n = self.value(*x).numel();
                let spatial = n / dy.len();
                let denom = T::from_usize(spatial).unwrap();
                res.push((*x, (0..n).map(|i| dy[i / spatial] / denom).collect()));
            }
            Op::Linear { x, w, b } => {
                let xs = self.shape(*x);
                let (n, i) = (xs[0], xs[1]);
                let o = self.shape(*w)[0];
                if self.needs(*x) {
                    let mut dx = vec![T::zero(); n * i];
                    T::gemm(
                        n,
                        o,
                        i,
                        T::one(),
                        dy,
                        false,
                        self.value(*w).data(),
                        false,
                        T::zero(),
                        &mut dx,
                    );
                    res.push((*x, dx));
                }
                if self.needs(*w) {
                    let mut dw = vec![T::zero(); o * i];
                    T::gemm(
                        o,
                        n,
                        i,
                        T::one(),
                        dy,
                        true,
                        self.value(*x).data(),
                        false,
                        T::zero(),
                        &mut dw,
                    );
                    res.push((*w, dw));
                }
                let mut db = vec![T::zero(); o];
                for row in dy.chunks(o) {
                    for (acc, &d) in db.iter_mut().zip(row) {
                        *acc = *acc + d;
                    }
                }
                res.push((*b, db));
            }
            Op::ChannelBias { x, b } => {
                let shape = self.shape(*x);
                let c = shape[1];
                let spatial: usize = shape[2..].iter().product();
                let mut db = vec![T::zero(); c];
                for (i, &d) in dy.iter().enumerate() {
                    let ch = (i / spatial) % c;
                    db[ch] = db[ch] + d;
                }
                res.push((*x, dy.to_vec()));
                res.push((*b, db));
            }
        }
        res
    }
}
