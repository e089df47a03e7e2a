//! Dense 4-D tensors in `(batch, time, feature, channel)` row-major layout.
//!
//! Every value flowing between layers is a [`Tensor`]. The layout makes a
//! feature-axis slice a strided copy of contiguous `(feature, channel)` runs
//! and a channel concatenation an interleave of per-position channel vectors.

mod rng;
mod scalar;

pub use rng::Rng;
pub use scalar::{gemm, Scalar, Strides};

use crate::error::{Error, Result};

/// Standard deviation used for weight initialization.
pub const INIT_STDDEV: f64 = 0.01;

/// Dimensions `(n, t, f, c)`.
///
/// Conv weights reuse the same four slots as `(kt, kf, in_c, out_c)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct Shape {
    pub n: usize,
    pub t: usize,
    pub f: usize,
    pub c: usize,
}

impl Shape {
    pub const fn new(n: usize, t: usize, f: usize, c: usize) -> Self {
        Self { n, t, f, c }
    }

    pub fn dims(&self) -> [usize; 4] {
        [self.n, self.t, self.f, self.c]
    }

    pub fn len(&self) -> usize {
        self.n * self.t * self.f * self.c
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Elements per batch item.
    pub fn sample_len(&self) -> usize {
        self.t * self.f * self.c
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims().contains(&0) {
            return Err(Error::InvalidShape(self.dims()));
        }
        Ok(())
    }

    pub fn with_batch(self, n: usize) -> Self {
        Self { n, ..self }
    }
}

impl From<(usize, usize, usize, usize)> for Shape {
    fn from((n, t, f, c): (usize, usize, usize, usize)) -> Self {
        Self::new(n, t, f, c)
    }
}

/// Axis along which [`concat`] joins tensors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Feature,
    Channel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T = f32> {
    shape: Shape,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(shape: impl Into<Shape>) -> Result<Self> {
        Self::filled(shape, T::zero())
    }

    pub fn filled(shape: impl Into<Shape>, value: T) -> Result<Self> {
        let shape = shape.into();
        shape.validate()?;
        Ok(Self {
            shape,
            data: vec![value; shape.len()],
        })
    }

    pub fn from_vec(shape: impl Into<Shape>, data: Vec<T>) -> Result<Self> {
        let shape = shape.into();
        shape.validate()?;
        if data.len() != shape.len() {
            return Err(Error::DataLength {
                shape: shape.dims(),
                expected: shape.len(),
                got: data.len(),
            });
        }
        Ok(Self { shape, data })
    }

    /// Samples of `N(0, stddev²)`, redrawing any value outside `±2·stddev`.
    pub fn truncated_normal(shape: impl Into<Shape>, stddev: f64, rng: &mut Rng) -> Result<Self> {
        if !(stddev > 0.0) || !stddev.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "truncated normal stddev must be positive, got {stddev}"
            )));
        }
        let shape = shape.into();
        shape.validate()?;
        let data = (0..shape.len())
            .map(|_| loop {
                let v = rng.normal() * stddev;
                if v.abs() <= 2.0 * stddev {
                    break T::of(v);
                }
            })
            .collect();
        Ok(Self { shape, data })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn offset(&self, n: usize, t: usize, f: usize, c: usize) -> usize {
        let s = &self.shape;
        ((n * s.t + t) * s.f + f) * s.c + c
    }

    #[inline]
    pub fn at(&self, n: usize, t: usize, f: usize, c: usize) -> T {
        self.data[self.offset(n, t, f, c)]
    }

    /// Batch item `i` as a flat slice of `t·f·c` elements.
    pub fn sample(&self, i: usize) -> &[T] {
        let len = self.shape.sample_len();
        &self.data[i * len..(i + 1) * len]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|v| U::of(v.as_f64())).collect(),
        }
    }

    /// Reinterprets the data under a new shape with the same element count.
    pub fn reshape(self, shape: impl Into<Shape>) -> Result<Self> {
        Self::from_vec(shape, self.data)
    }

    /// Copy of feature bins `[lo, hi)`.
    pub fn slice_feature(&self, lo: usize, hi: usize) -> Result<Self> {
        let s = self.shape;
        if lo >= hi || hi > s.f {
            return Err(Error::OutOfRange { lo, hi, dim: s.f });
        }
        let width = (hi - lo) * s.c;
        let mut data = Vec::with_capacity(s.n * s.t * width);
        for row in self.data.chunks_exact(s.f * s.c) {
            data.extend_from_slice(&row[lo * s.c..hi * s.c]);
        }
        Ok(Self {
            shape: Shape::new(s.n, s.t, hi - lo, s.c),
            data,
        })
    }

    /// Copies batch items `[start, start + len)`.
    pub fn batch_range(&self, start: usize, len: usize) -> Result<Self> {
        if len == 0 || start + len > self.shape.n {
            return Err(Error::OutOfRange {
                lo: start,
                hi: start + len,
                dim: self.shape.n,
            });
        }
        let sl = self.shape.sample_len();
        Ok(Self {
            shape: self.shape.with_batch(len),
            data: self.data[start * sl..(start + len) * sl].to_vec(),
        })
    }

    /// Stacks equally shaped single samples into one batch.
    pub fn stack(samples: &[&Tensor<T>]) -> Result<Self> {
        let first = samples.first().ok_or(Error::EmptyConcat)?.shape;
        let mut data = Vec::with_capacity(first.len() * samples.len());
        let mut n = 0;
        for s in samples {
            let sh = s.shape;
            if (sh.t, sh.f, sh.c) != (first.t, first.f, first.c) {
                return Err(Error::ShapeMismatch(format!(
                    "cannot stack {:?} with {:?}",
                    sh.dims(),
                    first.dims()
                )));
            }
            n += sh.n;
            data.extend_from_slice(&s.data);
        }
        Self::from_vec(first.with_batch(n), data)
    }
}

/// Concatenates tensors along `axis`, preserving input order.
pub fn concat<T: Scalar>(xs: &[&Tensor<T>], axis: Axis) -> Result<Tensor<T>> {
    let first = xs.first().ok_or(Error::EmptyConcat)?.shape;
    for x in xs {
        let s = x.shape;
        let agree = match axis {
            Axis::Feature => (s.n, s.t, s.c) == (first.n, first.t, first.c),
            Axis::Channel => (s.n, s.t, s.f) == (first.n, first.t, first.f),
        };
        if !agree {
            return Err(Error::ShapeMismatch(format!(
                "concat along {axis:?}: {:?} vs {:?}",
                s.dims(),
                first.dims()
            )));
        }
    }
    // In both layouts the output is an interleave of per-input runs: one run per
    // (n, t) row for feature concat, one per (n, t, f) position for channel concat.
    let (shape, run_of): (Shape, Box<dyn Fn(Shape) -> usize>) = match axis {
        Axis::Feature => (
            Shape::new(first.n, first.t, xs.iter().map(|x| x.shape.f).sum(), first.c),
            Box::new(|s: Shape| s.f * s.c),
        ),
        Axis::Channel => (
            Shape::new(first.n, first.t, first.f, xs.iter().map(|x| x.shape.c).sum()),
            Box::new(|s: Shape| s.c),
        ),
    };
    let runs = first.len() / run_of(first);
    let mut data = Vec::with_capacity(shape.len());
    for r in 0..runs {
        for x in xs {
            let len = run_of(x.shape);
            data.extend_from_slice(&x.data[r * len..(r + 1) * len]);
        }
    }
    Tensor::from_vec(shape, data)
}

/// Splits `grad` (shaped like the output of [`concat`]) back into per-input pieces.
pub fn split_concat<T: Scalar>(grad: &Tensor<T>, parts: &[Shape], axis: Axis) -> Result<Vec<Tensor<T>>> {
    let run_of = |s: Shape| match axis {
        Axis::Feature => s.f * s.c,
        Axis::Channel => s.c,
    };
    let first = *parts.first().ok_or(Error::EmptyConcat)?;
    let runs = first.len() / run_of(first);
    let total: usize = parts.iter().map(|&s| run_of(s)).sum();
    if runs * total != grad.data.len() {
        return Err(Error::ShapeMismatch("split_concat: gradient does not match parts".into()));
    }
    let mut out: Vec<Vec<T>> = parts.iter().map(|s| Vec::with_capacity(s.len())).collect();
    for row in grad.data.chunks_exact(total) {
        let mut off = 0;
        for (dst, &s) in out.iter_mut().zip(parts) {
            let len = run_of(s);
            dst.extend_from_slice(&row[off..off + len]);
            off += len;
        }
    }
    out.into_iter()
        .zip(parts)
        .map(|(d, &s)| Tensor::from_vec(s, d))
        .collect()
}
