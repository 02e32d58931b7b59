//! Convolution geometry and the im2col/col2im kernels shared by `conv2d`,
//! `conv3d` and `deconv3d`.
//!
//! Everything is lowered to 3 spatial axes; 2D convolution runs with a unit
//! depth axis and a unit depth kernel.

use crate::error::{Result, TensorError};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Padding<const N: usize> {
    /// No padding.
    Valid,
    /// Zero padding that keeps the extent at stride 1 (`ceil(in / s)` in
    /// general). An odd total goes to the trailing side.
    Same,
    /// Symmetric zero padding per axis.
    Explicit([usize; N]),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvConfig<const N: usize> {
    pub stride: [usize; N],
    pub padding: Padding<N>,
}

pub type Conv2dConfig = ConvConfig<2>;
pub type Conv3dConfig = ConvConfig<3>;

impl<const N: usize> ConvConfig<N> {
    pub fn same() -> Self {
        ConvConfig {
            stride: [1; N],
            padding: Padding::Same,
        }
    }

    pub fn valid() -> Self {
        ConvConfig {
            stride: [1; N],
            padding: Padding::Valid,
        }
    }

    pub fn with_stride(mut self, stride: [usize; N]) -> Self {
        self.stride = stride;
        self
    }
}

/// Transposed 3D convolution hyper-parameters.
///
/// Output extent per axis is `(in - 1) * stride - 2 * padding + kernel + output_padding`.
/// `output_padding < stride` is required so the operation stays the exact
/// adjoint of `conv3d` with the same kernel, stride and padding.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DeconvConfig {
    pub stride: [usize; 3],
    pub padding: [usize; 3],
    pub output_padding: [usize; 3],
}

impl DeconvConfig {
    /// Configuration that multiplies every extent by `stride` exactly, for odd kernels.
    pub fn upscale(stride: [usize; 3], kernel: [usize; 3]) -> Self {
        let mut padding = [0; 3];
        let mut output_padding = [0; 3];
        for i in 0..3 {
            padding[i] = (kernel[i] - 1) / 2;
            output_padding[i] = (stride[i] + 2 * padding[i]).saturating_sub(kernel[i]);
        }
        DeconvConfig {
            stride,
            padding,
            output_padding,
        }
    }
}

/// Fully resolved geometry of a forward cross-correlation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Geometry {
    pub batch: usize,
    pub cin: usize,
    pub cout: usize,
    pub input: [usize; 3],
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    pub pad: [usize; 3],
    pub output: [usize; 3],
}

const AXES: [&str; 3] = ["depth", "height", "width"];

impl Geometry {
    pub fn col_rows(&self) -> usize {
        self.cin * self.kernel.iter().product::<usize>()
    }

    pub fn col_cols(&self) -> usize {
        self.output.iter().product()
    }

    pub fn in_len(&self) -> usize {
        self.cin * self.input.iter().product::<usize>()
    }

    pub fn out_len(&self) -> usize {
        self.cout * self.col_cols()
    }

    /// Geometry of `x[N, Cin, D, H, W]` correlated with `w[Cout, Cin, kD, kH, kW]`.
    pub fn conv(op: &'static str, x: &[usize], w: &[usize], stride: [usize; 3], padding: Padding<3>) -> Result<Self> {
        if x.len() != 5 || w.len() != 5 {
            return Err(TensorError::dim(
                op,
                "rank",
                format!("expected 5-d input and kernel, got {x:?} and {w:?}"),
            ));
        }
        if x[1] != w[1] {
            return Err(TensorError::dim(
                op,
                "channels",
                format!("input has {} channels, kernel expects {}", x[1], w[1]),
            ));
        }
        let mut pad = [0; 3];
        let mut output = [0; 3];
        for i in 0..3 {
            let (n, k, s) = (x[i + 2], w[i + 2], stride[i]);
            if s == 0 {
                return Err(TensorError::arg(op, format!("{} stride must be >= 1", AXES[i])));
            }
            let (before, after) = match padding {
                Padding::Valid => (0, 0),
                Padding::Explicit(p) => (p[i], p[i]),
                Padding::Same => {
                    let out = n.div_ceil(s);
                    let total = ((out - 1) * s + k).saturating_sub(n);
                    (total / 2, total - total / 2)
                }
            };
            let padded = n + before + after;
            if k > padded {
                return Err(TensorError::dim(
                    op,
                    AXES[i],
                    format!("kernel extent {k} exceeds padded input extent {padded}"),
                ));
            }
            pad[i] = before;
            output[i] = (padded - k) / s + 1;
        }
        Ok(Geometry {
            batch: x[0],
            cin: x[1],
            cout: w[0],
            input: [x[2], x[3], x[4]],
            kernel: [w[2], w[3], w[4]],
            stride,
            pad,
            output,
        })
    }

    /// Geometry of the forward convolution whose adjoint is the transposed
    /// convolution of `y[N, Cy, d, h, w]` with `w[Cy, Cx, kD, kH, kW]`.
    pub fn deconv(y: &[usize], w: &[usize], cfg: &DeconvConfig) -> Result<Self> {
        const OP: &str = "deconv3d";
        if y.len() != 5 || w.len() != 5 {
            return Err(TensorError::dim(
                OP,
                "rank",
                format!("expected 5-d input and kernel, got {y:?} and {w:?}"),
            ));
        }
        if y[1] != w[0] {
            return Err(TensorError::dim(
                OP,
                "channels",
                format!("input has {} channels, kernel expects {}", y[1], w[0]),
            ));
        }
        let mut input = [0; 3];
        for i in 0..3 {
            let (n, k, s, p, op) = (y[i + 2], w[i + 2], cfg.stride[i], cfg.padding[i], cfg.output_padding[i]);
            if s == 0 {
                return Err(TensorError::arg(OP, format!("{} stride must be >= 1", AXES[i])));
            }
            if op >= s {
                return Err(TensorError::arg(
                    OP,
                    format!("{} output padding {op} must be below stride {s}", AXES[i]),
                ));
            }
            let full = (n - 1) * s + k + op;
            if full <= 2 * p {
                return Err(TensorError::dim(
                    OP,
                    AXES[i],
                    format!("padding {p} consumes the whole output extent"),
                ));
            }
            input[i] = full - 2 * p;
        }
        let geom = Geometry {
            batch: y[0],
            cin: w[1],
            cout: w[0],
            input,
            kernel: [w[2], w[3], w[4]],
            stride: cfg.stride,
            pad: cfg.padding,
            output: [y[2], y[3], y[4]],
        };
        debug_assert!((0..3)
            .all(|i| { (geom.input[i] + 2 * geom.pad[i] - geom.kernel[i]) / geom.stride[i] + 1 == geom.output[i] }));
        Ok(geom)
    }
}

/// Unfolds one sample `x[Cin, D, H, W]` into `cols[Cin*kD*kH*kW, D'*H'*W']`.
pub(crate) fn im2col<T: Scalar>(g: &Geometry, x: &[T], cols: &mut [T]) {
    let [id, ih, iw] = g.input;
    let [kd, kh, kw] = g.kernel;
    let [od, oh, ow] = g.output;
    let [sd, sh, sw] = g.stride;
    let [pd, ph, pw] = g.pad;
    let l = od * oh * ow;
    let plane = id * ih * iw;
    let mut row = 0;
    for c in 0..g.cin {
        let xc = &x[c * plane..(c + 1) * plane];
        for a in 0..kd {
            for b in 0..kh {
                for e in 0..kw {
                    let dst = &mut cols[row * l..(row + 1) * l];
                    let mut idx = 0;
                    for zd in 0..od {
                        let z = (zd * sd + a) as isize - pd as isize;
                        let z_ok = z >= 0 && (z as usize) < id;
                        for zh in 0..oh {
                            let y = (zh * sh + b) as isize - ph as isize;
                            if !z_ok || y < 0 || y as usize >= ih {
                                dst[idx..idx + ow].fill(T::zero());
                                idx += ow;
                                continue;
                            }
                            let base = (z as usize * ih + y as usize) * iw;
                            for zw in 0..ow {
                                let xx = (zw * sw + e) as isize - pw as isize;
                                dst[idx] = if xx >= 0 && (xx as usize) < iw {
                                    xc[base + xx as usize]
                                } else {
                                    T::zero()
                                };
                                idx += 1;
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters `cols` back, accumulating into `x`.
pub(crate) fn col2im<T: Scalar>(g: &Geometry, cols: &[T], x: &mut [T]) {
    let [id, ih, iw] = g.input;
    let [kd, kh, kw] = g.kernel;
    let [od, oh, ow] = g.output;
    let [sd, sh, sw] = g.stride;
    let [pd, ph, pw] = g.pad;
    let l = od * oh * ow;
    let plane = id * ih * iw;
    let mut row = 0;
    for c in 0..g.cin {
        let xc = &mut x[c * plane..(c + 1) * plane];
        for a in 0..kd {
            for b in 0..kh {
                for e in 0..kw {
                    let src = &cols[row * l..(row + 1) * l];
                    let mut idx = 0;
                    for zd in 0..od {
                        let z = (zd * sd + a) as isize - pd as isize;
                        let z_ok = z >= 0 && (z as usize) < id;
                        for zh in 0..oh {
                            let y = (zh * sh + b) as isize - ph as isize;
                            if !z_ok || y < 0 || y as usize >= ih {
                                idx += ow;
                                continue;
                            }
                            let base = (z as usize * ih + y as usize) * iw;
                            for zw in 0..ow {
                                let xx = (zw * sw + e) as isize - pw as isize;
                                if xx >= 0 && (xx as usize) < iw {
                                    xc[base + xx as usize] = xc[base + xx as usize] + src[idx];
                                }
                                idx += 1;
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

pub(crate) fn conv_forward<T: Scalar>(g: &Geometry, x: &[T], w: &[T]) -> Vec<T> {
    let (r, l) = (g.col_rows(), g.col_cols());
    let mut cols = vec![T::zero(); r * l];
    let mut out = vec![T::zero(); g.batch * g.out_len()];
    for n in 0..g.batch {
        im2col(g, &x[n * g.in_len()..(n + 1) * g.in_len()], &mut cols);
        let dst = &mut out[n * g.out_len()..(n + 1) * g.out_len()];
        T::gemm(g.cout, r, l, T::one(), w, false, &cols, false, T::zero(), dst);
    }
    out
}

/// Gradients of the forward convolution w.r.t. input and kernel.
pub(crate) fn conv_backward<T: Scalar>(
    g: &Geometry,
    x: &[T],
    w: &[T],
    dy: &[T],
    need_dx: bool,
    need_dw: bool,
) -> (Option<Vec<T>>, Option<Vec<T>>) {
    let (r, l) = (g.col_rows(), g.col_cols());
    let mut cols = vec![T::zero(); r * l];
    let mut dx = need_dx.then(|| vec![T::zero(); g.batch * g.in_len()]);
    let mut dw = need_dw.then(|| vec![T::zero(); g.cout * r]);
    for n in 0..g.batch {
        let dyn_ = &dy[n * g.out_len()..(n + 1) * g.out_len()];
        if let Some(dw) = dw.as_mut() {
            im2col(g, &x[n * g.in_len()..(n + 1) * g.in_len()], &mut cols);
            T::gemm(g.cout, l, r, T::one(), dyn_, false, &cols, true, T::one(), dw);
        }
        if let Some(dx) = dx.as_mut() {
            T::gemm(r, g.cout, l, T::one(), w, true, dyn_, false, T::zero(), &mut cols);
            col2im(g, &cols, &mut dx[n * g.in_len()..(n + 1) * g.in_len()]);
        }
    }
    (dx, dw)
}

/// Transposed convolution: `y` has the forward convolution's output layout,
/// the result has its input layout.
pub(crate) fn deconv_forward<T: Scalar>(g: &Geometry, y: &[T], w: &[T]) -> Vec<T> {
    let (r, l) = (g.col_rows(), g.col_cols());
    let mut cols = vec![T::zero(); r * l];
    let mut out = vec![T::zero(); g.batch * g.in_len()];
    for n in 0..g.batch {
        let yn = &y[n * g.out_len()..(n + 1) * g.out_len()];
        T::gemm(r, g.cout, l, T::one(), w, true, yn, false, T::zero(), &mut cols);
        col2im(g, &cols, &mut out[n * g.in_len()..(n + 1) * g.in_len()]);
    }
    out
}

pub(crate) fn deconv_backward<T: Scalar>(
    g: &Geometry,
    y: &[T],
    w: &[T],
    dout: &[T],
    need_dy: bool,
    need_dw: bool,
) -> (Option<Vec<T>>, Option<Vec<T>>) {
    let (r, l) = (g.col_rows(), g.col_cols());
    let mut cols = vec![T::zero(); r * l];
    let mut dy = need_dy.then(|| vec![T::zero(); g.batch * g.out_len()]);
    let mut dw = need_dw.then(|| vec![T::zero(); g.cout * r]);
    for n in 0..g.batch {
        im2col(g, &dout[n * g.in_len()..(n + 1) * g.in_len()], &mut cols);
        if let Some(dy) = dy.as_mut() {
            let dst = &mut dy[n * g.out_len()..(n + 1) * g.out_len()];
            T::gemm(g.cout, r, l, T::one(), w, false, &cols, false, T::zero(), dst);
        }
        if let Some(dw) = dw.as_mut() {
            let yn = &y[n * g.out_len()..(n + 1) * g.out_len()];
            T::gemm(g.cout, l, r, T::one(), yn, false, &cols, true, T::one(), dw);
        }
    }
    (dy, dw)
}
