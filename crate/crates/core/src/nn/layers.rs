//! Forward and backward passes of the individual layers.
//!
//! All layers take and return [`Tensor`]s in `(n, t, f, c)` layout. Spatial
//! layers use SAME padding: the output extent is `ceil(in / stride)` and the
//! padding is split with the smaller half before the first element.

use crate::error::{Error, Result};
use crate::tensor::{gemm, Rng, Scalar, Shape, Strides, Tensor};

/// Output extent and leading pad of a SAME-padded window.
pub fn same_padding(input: usize, kernel: usize, stride: usize) -> (usize, usize) {
    let out = input.div_ceil(stride);
    let total = ((out - 1) * stride + kernel).saturating_sub(input);
    (out, total / 2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    Same,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams<T = f32> {
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub padding: Padding,
    /// `(kt, kf, in_c, out_c)`.
    pub weights: Tensor<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> ConvParams<T> {
    pub fn new(kernel: (usize, usize), stride: (usize, usize), weights: Tensor<T>, bias: Vec<T>) -> Result<Self> {
        let w = weights.shape();
        if kernel.0 == 0 || kernel.1 == 0 || stride.0 == 0 || stride.1 == 0 {
            return Err(Error::InvalidParameter(format!(
                "conv kernel {kernel:?} and stride {stride:?} must be positive"
            )));
        }
        if (w.n, w.t) != kernel || bias.len() != w.c {
            return Err(Error::ShapeMismatch(format!(
                "conv weights {:?} / bias {} inconsistent with kernel {kernel:?}",
                w.dims(),
                bias.len()
            )));
        }
        Ok(Self {
            kernel,
            stride,
            padding: Padding::Same,
            weights,
            bias,
        })
    }

    pub fn in_channels(&self) -> usize {
        self.weights.shape().f
    }

    pub fn out_channels(&self) -> usize {
        self.weights.shape().c
    }

    pub fn output_shape(&self, x: Shape) -> Shape {
        let (ot, _) = same_padding(x.t, self.kernel.0, self.stride.0);
        let (of, _) = same_padding(x.f, self.kernel.1, self.stride.1);
        Shape::new(x.n, ot, of, self.out_channels())
    }

    fn taps(&self) -> usize {
        self.kernel.0 * self.kernel.1 * self.in_channels()
    }
}

struct ConvGeometry {
    kt: usize,
    kf: usize,
    st: usize,
    sf: usize,
    pt: usize,
    pf: usize,
    ot: usize,
    of: usize,
}

impl ConvGeometry {
    fn new<T: Scalar>(x: Shape, p: &ConvParams<T>) -> Self {
        let (ot, pt) = same_padding(x.t, p.kernel.0, p.stride.0);
        let (of, pf) = same_padding(x.f, p.kernel.1, p.stride.1);
        Self {
            kt: p.kernel.0,
            kf: p.kernel.1,
            st: p.stride.0,
            sf: p.stride.1,
            pt,
            pf,
            ot,
            of,
        }
    }

    /// Valid input range `[lo, hi)` on one axis for an output index, and the
    /// first kernel tap that lands on it.
    fn window(o: usize, stride: usize, pad: usize, k: usize, len: usize) -> (usize, usize, usize) {
        let start = (o * stride) as isize - pad as isize;
        let lo = start.max(0) as usize;
        let hi = ((start + k as isize).max(0) as usize).min(len);
        (lo, hi.max(lo), (lo as isize - start) as usize)
    }
}

/// Unrolls one sample into a `(ot·of) × (kt·kf·c)` matrix whose column order
/// matches the row-major `(kt, kf, in_c)` weight layout.
fn im2col<T: Scalar>(x: &[T], xs: Shape, g: &ConvGeometry, cols: &mut [T]) {
    let c = xs.c;
    let row_len = g.kt * g.kf * c;
    cols.fill(T::zero());
    for ot in 0..g.ot {
        let (t_lo, t_hi, i0) = ConvGeometry::window(ot, g.st, g.pt, g.kt, xs.t);
        for of in 0..g.of {
            let (f_lo, f_hi, j0) = ConvGeometry::window(of, g.sf, g.pf, g.kf, xs.f);
            let row = &mut cols[(ot * g.of + of) * row_len..][..row_len];
            let run = (f_hi - f_lo) * c;
            for (di, it) in (t_lo..t_hi).enumerate() {
                let dst = ((i0 + di) * g.kf + j0) * c;
                let src = (it * xs.f + f_lo) * c;
                row[dst..dst + run].copy_from_slice(&x[src..src + run]);
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates column gradients into `dx`.
fn col2im<T: Scalar>(cols: &[T], xs: Shape, g: &ConvGeometry, dx: &mut [T]) {
    let c = xs.c;
    let row_len = g.kt * g.kf * c;
    for ot in 0..g.ot {
        let (t_lo, t_hi, i0) = ConvGeometry::window(ot, g.st, g.pt, g.kt, xs.t);
        for of in 0..g.of {
            let (f_lo, f_hi, j0) = ConvGeometry::window(of, g.sf, g.pf, g.kf, xs.f);
            let row = &cols[(ot * g.of + of) * row_len..][..row_len];
            let run = (f_hi - f_lo) * c;
            for (di, it) in (t_lo..t_hi).enumerate() {
                let src = ((i0 + di) * g.kf + j0) * c;
                let dst = (it * xs.f + f_lo) * c;
                for (d, &s) in dx[dst..dst + run].iter_mut().zip(&row[src..src + run]) {
                    *d += s;
                }
            }
        }
    }
}

pub fn conv2d_forward<T: Scalar>(x: &Tensor<T>, p: &ConvParams<T>) -> Result<Tensor<T>> {
    let xs = x.shape();
    if xs.c != p.in_channels() {
        return Err(Error::ShapeMismatch(format!(
            "conv expects {} input channels, got {}",
            p.in_channels(),
            xs.c
        )));
    }
    let g = ConvGeometry::new(xs, p);
    let out_shape = p.output_shape(xs);
    let positions = g.ot * g.of;
    let taps = p.taps();
    let oc = p.out_channels();
    let mut out = Vec::with_capacity(out_shape.len());
    for _ in 0..xs.n * positions {
        out.extend_from_slice(&p.bias);
    }
    let mut cols = vec![T::zero(); positions * taps];
    for n in 0..xs.n {
        im2col(x.sample(n), xs, &g, &mut cols);
        let dst = &mut out[n * positions * oc..(n + 1) * positions * oc];
        gemm(
            positions,
            taps,
            oc,
            &cols,
            Strides::row_major(taps),
            p.weights.data(),
            Strides::row_major(oc),
            T::one(),
            dst,
            Strides::row_major(oc),
        );
    }
    Tensor::from_vec(out_shape, out)
}

#[derive(Debug, Clone)]
pub struct ConvGrads<T = f32> {
    pub grad_x: Option<Tensor<T>>,
    pub grad_w: Tensor<T>,
    pub grad_b: Vec<T>,
}

/// Gradients of [`conv2d_forward`]; `grad_x` is always computed.
pub fn conv2d_backward<T: Scalar>(
    x: &Tensor<T>,
    p: &ConvParams<T>,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Vec<T>)> {
    let g = conv2d_backward_with(x, p, grad_out, true)?;
    Ok((g.grad_x.expect("requested"), g.grad_w, g.grad_b))
}

pub fn conv2d_backward_with<T: Scalar>(
    x: &Tensor<T>,
    p: &ConvParams<T>,
    grad_out: &Tensor<T>,
    want_grad_x: bool,
) -> Result<ConvGrads<T>> {
    let xs = x.shape();
    if xs.c != p.in_channels() || grad_out.shape() != p.output_shape(xs) {
        return Err(Error::ShapeMismatch(format!(
            "conv backward: grad_out {:?} does not match forward output {:?}",
            grad_out.shape().dims(),
            p.output_shape(xs).dims()
        )));
    }
    let g = ConvGeometry::new(xs, p);
    let positions = g.ot * g.of;
    let taps = p.taps();
    let oc = p.out_channels();

    let mut grad_w = vec![T::zero(); taps * oc];
    let mut grad_b = vec![T::zero(); oc];
    let mut grad_x = want_grad_x.then(|| vec![T::zero(); xs.len()]);
    let mut cols = vec![T::zero(); positions * taps];
    let mut dcols = vec![T::zero(); if want_grad_x { positions * taps } else { 0 }];

    for n in 0..xs.n {
        let go = grad_out.sample(n);
        for row in go.chunks_exact(oc) {
            for (b, &v) in grad_b.iter_mut().zip(row) {
                *b += v;
            }
        }
        im2col(x.sample(n), xs, &g, &mut cols);
        // grad_w (taps×oc) += colsᵀ (taps×P) · grad_out (P×oc)
        gemm(
            taps,
            positions,
            oc,
            &cols,
            Strides::transposed(taps),
            go,
            Strides::row_major(oc),
            T::one(),
            &mut grad_w,
            Strides::row_major(oc),
        );
        if let Some(dx) = grad_x.as_mut() {
            // dcols (P×taps) = grad_out (P×oc) · Wᵀ (oc×taps)
            gemm(
                positions,
                oc,
                taps,
                go,
                Strides::row_major(oc),
                p.weights.data(),
                Strides::transposed(oc),
                T::zero(),
                &mut dcols,
                Strides::row_major(taps),
            );
            let sl = xs.sample_len();
            col2im(&dcols, xs, &g, &mut dx[n * sl..(n + 1) * sl]);
        }
    }
    Ok(ConvGrads {
        grad_x: grad_x.map(|d| Tensor::from_vec(xs, d)).transpose()?,
        grad_w: Tensor::from_vec(p.weights.shape(), grad_w)?,
        grad_b,
    })
}

/// Flat input index of the winning element for every pooled output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolIndex {
    pub input_shape: Shape,
    pub output_shape: Shape,
    pub argmax: Vec<usize>,
}

/// Max pooling with SAME-style windows; ties go to the smallest flat index.
pub fn maxpool_forward<T: Scalar>(
    x: &Tensor<T>,
    window: (usize, usize),
    stride: (usize, usize),
) -> Result<(Tensor<T>, PoolIndex)> {
    if window.0 == 0 || window.1 == 0 || stride.0 == 0 || stride.1 == 0 {
        return Err(Error::InvalidParameter("pool window and stride must be positive".into()));
    }
    let s = x.shape();
    let (ot, pt) = same_padding(s.t, window.0, stride.0);
    let (of, pf) = same_padding(s.f, window.1, stride.1);
    let out_shape = Shape::new(s.n, ot, of, s.c);
    let mut out = Vec::with_capacity(out_shape.len());
    let mut argmax = Vec::with_capacity(out_shape.len());
    let data = x.data();
    for n in 0..s.n {
        for o_t in 0..ot {
            let (t_lo, t_hi, _) = ConvGeometry::window(o_t, stride.0, pt, window.0, s.t);
            for o_f in 0..of {
                let (f_lo, f_hi, _) = ConvGeometry::window(o_f, stride.1, pf, window.1, s.f);
                for c in 0..s.c {
                    let mut best = x.offset(n, t_lo, f_lo, c);
                    for t in t_lo..t_hi {
                        for f in f_lo..f_hi {
                            let idx = x.offset(n, t, f, c);
                            if data[idx] > data[best] {
                                best = idx;
                            }
                        }
                    }
                    out.push(data[best]);
                    argmax.push(best);
                }
            }
        }
    }
    Ok((
        Tensor::from_vec(out_shape, out)?,
        PoolIndex {
            input_shape: s,
            output_shape: out_shape,
            argmax,
        },
    ))
}

pub fn maxpool_backward<T: Scalar>(index: &PoolIndex, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    if grad_out.shape() != index.output_shape {
        return Err(Error::ShapeMismatch(format!(
            "maxpool backward: grad {:?} vs pooled {:?}",
            grad_out.shape().dims(),
            index.output_shape.dims()
        )));
    }
    let mut dx = vec![T::zero(); index.input_shape.len()];
    for (&i, &g) in index.argmax.iter().zip(grad_out.data()) {
        dx[i] += g;
    }
    Tensor::from_vec(index.input_shape, dx)
}

pub fn relu_forward<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Passes gradient where `x > 0`; the derivative at exactly zero is zero.
pub fn relu_backward<T: Scalar>(x: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    if x.shape() != grad_out.shape() {
        return Err(Error::ShapeMismatch("relu backward: shapes differ".into()));
    }
    let data = x
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&v, &g)| if v > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::from_vec(x.shape(), data)
}

/// Per-element multipliers of one dropout application: `0` or `1/(1-P)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMask<T = f32>(pub Vec<T>);

pub fn check_dropout_rate(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidParameter(format!("dropout rate must be in [0, 1), got {rate}")));
    }
    Ok(())
}

/// Inverted dropout. In eval mode (`rng` is `None`) the input passes through
/// unchanged and the mask is all ones.
pub fn dropout_forward<T: Scalar>(
    x: &Tensor<T>,
    rate: f64,
    rng: Option<&mut Rng>,
) -> Result<(Tensor<T>, DropoutMask<T>)> {
    check_dropout_rate(rate)?;
    let mask = match rng {
        Some(rng) if rate > 0.0 => {
            let keep = T::of(1.0 / (1.0 - rate));
            (0..x.data().len())
                .map(|_| if rng.uniform() < rate { T::zero() } else { keep })
                .collect()
        }
        _ => vec![T::one(); x.data().len()],
    };
    let mask = DropoutMask(mask);
    Ok((apply_mask(x, &mask)?, mask))
}

pub fn apply_mask<T: Scalar>(x: &Tensor<T>, mask: &DropoutMask<T>) -> Result<Tensor<T>> {
    if mask.0.len() != x.data().len() {
        return Err(Error::ShapeMismatch(format!(
            "dropout mask of {} elements for tensor of {}",
            mask.0.len(),
            x.data().len()
        )));
    }
    let data = x.data().iter().zip(&mask.0).map(|(&v, &m)| v * m).collect();
    Tensor::from_vec(x.shape(), data)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams<T = f32> {
    pub in_features: usize,
    pub out_features: usize,
    /// Row-major `out_features × in_features`.
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> DenseParams<T> {
    pub fn new(in_features: usize, out_features: usize, weights: Vec<T>, bias: Vec<T>) -> Result<Self> {
        if weights.len() != in_features * out_features || bias.len() != out_features {
            return Err(Error::ShapeMismatch(format!(
                "dense {in_features}->{out_features}: {} weights, {} biases",
                weights.len(),
                bias.len()
            )));
        }
        Ok(Self {
            in_features,
            out_features,
            weights,
            bias,
        })
    }
}

/// `logits = W·x + b` for each of the `n` rows of `x` (row-major `n × in`).
pub fn dense_forward<T: Scalar>(x: &[T], n: usize, p: &DenseParams<T>) -> Result<Vec<T>> {
    if x.len() != n * p.in_features {
        return Err(Error::ShapeMismatch(format!(
            "dense expects {} inputs per row, got {} for {n} rows",
            p.in_features,
            x.len()
        )));
    }
    let mut out: Vec<T> = (0..n).flat_map(|_| p.bias.iter().copied()).collect();
    gemm(
        n,
        p.in_features,
        p.out_features,
        x,
        Strides::row_major(p.in_features),
        &p.weights,
        Strides::transposed(p.in_features),
        T::one(),
        &mut out,
        Strides::row_major(p.out_features),
    );
    Ok(out)
}

/// Returns `(grad_x, grad_w, grad_b)`.
pub fn dense_backward<T: Scalar>(
    x: &[T],
    n: usize,
    p: &DenseParams<T>,
    grad_out: &[T],
) -> Result<(Vec<T>, Vec<T>, Vec<T>)> {
    if x.len() != n * p.in_features || grad_out.len() != n * p.out_features {
        return Err(Error::ShapeMismatch("dense backward: lengths do not match".into()));
    }
    let (i, o) = (p.in_features, p.out_features);
    let mut grad_w = vec![T::zero(); o * i];
    gemm(o, n, i, grad_out, Strides::transposed(o), x, Strides::row_major(i), T::zero(), &mut grad_w, Strides::row_major(i));
    let mut grad_b = vec![T::zero(); o];
    for row in grad_out.chunks_exact(o) {
        for (b, &g) in grad_b.iter_mut().zip(row) {
            *b += g;
        }
    }
    let mut grad_x = vec![T::zero(); n * i];
    gemm(n, o, i, grad_out, Strides::row_major(o), &p.weights, Strides::row_major(i), T::zero(), &mut grad_x, Strides::row_major(i));
    Ok((grad_x, grad_w, grad_b))
}

/// Max-subtracted softmax cross entropy for one row of logits.
pub fn softmax_cross_entropy<T: Scalar>(logits: &[T], label: usize) -> Result<(T, Vec<T>)> {
    if label >= logits.len() {
        return Err(Error::LabelOutOfRange {
            label,
            classes: logits.len(),
        });
    }
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: T = exps.iter().copied().sum();
    let log_sum = sum.ln();
    let loss = -(logits[label] - max - log_sum);
    let mut grad: Vec<T> = exps.iter().map(|&e| e / sum).collect();
    grad[label] -= T::one();
    Ok((loss, grad))
}
