//! Dense row-major tensors and the numeric primitives built on them.
//!
//! Four-dimensional feature maps use the layout `[batch, channels, rows, cols]`.
//! All operations are pure: they never mutate their inputs and return
//! bit-identical results for identical arguments.

mod conv;
mod init;
mod linalg;
mod norm;
mod resize;

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

pub use conv::{conv2d, conv2d_backward, ConvGrads, ConvSpec};
pub use init::{prng_fill, Init};
pub use linalg::{matmul, matmul_into, Transpose};
pub use norm::{instance_norm, layer_norm, layer_norm_backward, DEFAULT_EPS};
pub use resize::{resize_bilinear, resize_bilinear_backward};

use crate::error::{shape_err, Error, Result};

/// Floating scalar usable in tensors: `f32` for production paths, `f64`
/// for gradient verification.
pub trait Real:
    num_traits::Float
    + ndarray::LinalgScalar
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Real for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        f64::from(self)
    }
}

impl Real for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
}

#[derive(Clone, PartialEq)]
pub struct Tensor<F = f32> {
    shape: Vec<usize>,
    data: Vec<F>,
}

impl<F: Debug + Copy> Debug for Tensor<F> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let preview: Vec<F> = self.data.iter().take(8).copied().collect::<Vec<_>>();
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("data[..8]", &preview)
            .finish()
    }
}

impl<F: Real> Tensor<F> {
    pub fn new(shape: impl Into<Vec<usize>>, data: Vec<F>) -> Result<Self> {
        let shape = shape.into();
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(shape_err!(
                "shape {shape:?} holds {numel} values, got {}",
                data.len()
            ));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Self {
        Self::full(shape, F::zero())
    }

    pub fn full(shape: impl Into<Vec<usize>>, value: F) -> Self {
        let shape = shape.into();
        let numel = shape.iter().product();
        Self {
            shape,
            data: vec![value; numel],
        }
    }

    pub fn from_f64(shape: impl Into<Vec<usize>>, values: &[f64]) -> Result<Self> {
        Self::new(shape, values.iter().map(|&v| F::from_f64(v)).collect())
    }

    /// Square identity matrix.
    pub fn eye(n: usize) -> Self {
        let mut t = Self::zeros([n, n]);
        for i in 0..n {
            t.data[i * n + i] = F::one();
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<F> {
        self.data
    }

    /// Shape as `(batch, channels, rows, cols)`; errors unless rank 4.
    pub fn dims4(&self) -> Result<(usize, usize, usize, usize)> {
        match self.shape[..] {
            [b, c, r, w] => Ok((b, c, r, w)),
            _ => Err(shape_err!("expected a 4-D tensor, got shape {:?}", self.shape)),
        }
    }

    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape[..] {
            [r, c] => Ok((r, c)),
            _ => Err(shape_err!("expected a 2-D tensor, got shape {:?}", self.shape)),
        }
    }

    pub fn reshape(self, shape: impl Into<Vec<usize>>) -> Result<Self> {
        Self::new(shape, self.data)
    }

    pub fn map(&self, f: impl Fn(F) -> F) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(F, F) -> F) -> Result<Self> {
        self.expect_same_shape(other)?;
        Ok(Self {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, k: F) -> Self {
        self.map(|v| v * k)
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.expect_same_shape(other)?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    /// `self += k * other`
    pub fn axpy(&mut self, k: F, other: &Self) -> Result<()> {
        self.expect_same_shape(other)?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += k * b;
        }
        Ok(())
    }

    pub fn relu(&self) -> Self {
        self.map(|v| v.max(F::zero()))
    }

    pub fn sum(&self) -> F {
        self.data.iter().copied().sum()
    }

    pub fn sum_sq(&self) -> F {
        self.data.iter().map(|&v| v * v).sum()
    }

    pub fn max_abs(&self) -> F {
        self.data.iter().fold(F::zero(), |m, &v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<F> {
        self.expect_same_shape(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(F::zero(), |m, (&a, &b)| m.max((a - b).abs())))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn ensure_finite(&self, what: &str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite(format!("{what} contains NaN or Inf")))
        }
    }

    pub fn expect_same_shape(&self, other: &Self) -> Result<()> {
        if self.shape == other.shape {
            Ok(())
        } else {
            Err(shape_err!("{:?} vs {:?}", self.shape, other.shape))
        }
    }

    pub fn cast<G: Real>(&self) -> Tensor<G> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| G::from_f64(v.as_f64())).collect(),
        }
    }

    /// Element `[b, c, r, w]` of a 4-D tensor (panics on out-of-range).
    pub fn at4(&self, b: usize, c: usize, r: usize, w: usize) -> F {
        let (_, cs, rs, ws) = (self.shape[0], self.shape[1], self.shape[2], self.shape[3]);
        self.data[((b * cs + c) * rs + r) * ws + w]
    }

    pub fn at4_mut(&mut self, b: usize, c: usize, r: usize, w: usize) -> &mut F {
        let (cs, rs, ws) = (self.shape[1], self.shape[2], self.shape[3]);
        &mut self.data[((b * cs + c) * rs + r) * ws + w]
    }

    /// Contiguous `[rows, cols]` plane of channel `c` in sample `b`.
    pub fn plane(&self, b: usize, c: usize) -> &[F] {
        let (cs, plane) = (self.shape[1], self.shape[2] * self.shape[3]);
        let start = (b * cs + c) * plane;
        &self.data[start..start + plane]
    }

    pub fn plane_mut(&mut self, b: usize, c: usize) -> &mut [F] {
        let (cs, plane) = (self.shape[1], self.shape[2] * self.shape[3]);
        let start = (b * cs + c) * plane;
        &mut self.data[start..start + plane]
    }

    /// Concatenate 4-D tensors along the channel axis.
    pub fn concat_channels(parts: &[&Self]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| shape_err!("concat of zero tensors"))?;
        let (b, _, r, w) = first.dims4()?;
        let mut total = 0;
        for p in parts {
            let (pb, pc, pr, pw) = p.dims4()?;
            if (pb, pr, pw) != (b, r, w) {
                return Err(shape_err!("concat {:?} with {:?}", first.shape, p.shape));
            }
            total += pc;
        }
        let mut data = Vec::with_capacity(b * total * r * w);
        for bi in 0..b {
            for p in parts {
                let per = p.shape[1] * r * w;
                data.extend_from_slice(&p.data[bi * per..(bi + 1) * per]);
            }
        }
        Self::new([b, total, r, w], data)
    }

    /// Inverse of [`Tensor::concat_channels`].
    pub fn split_channels(&self, sizes: &[usize]) -> Result<Vec<Self>> {
        let (b, c, r, w) = self.dims4()?;
        if sizes.iter().sum::<usize>() != c {
            return Err(shape_err!("split sizes {sizes:?} do not sum to {c}"));
        }
        let mut out: Vec<Vec<F>> = sizes.iter().map(|s| Vec::with_capacity(b * s * r * w)).collect();
        for bi in 0..b {
            let mut offset = (bi * c) * r * w;
            for (dst, &s) in out.iter_mut().zip(sizes) {
                dst.extend_from_slice(&self.data[offset..offset + s * r * w]);
                offset += s * r * w;
            }
        }
        out.into_iter()
            .zip(sizes)
            .map(|(d, &s)| Self::new([b, s, r, w], d))
            .collect()
    }

    /// Stack tensors along the leading (batch) axis. Trailing extents must agree.
    pub fn concat_batch(parts: &[&Self]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| shape_err!("concat of zero tensors"))?;
        let tail = first.shape.get(1..).ok_or_else(|| shape_err!("rank-0 tensor has no batch axis"))?;
        let mut data = Vec::with_capacity(parts.iter().map(|p| p.numel()).sum());
        let mut batch = 0;
        for p in parts {
            if p.shape.get(1..) != Some(tail) {
                return Err(shape_err!("batch concat {:?} with {:?}", first.shape, p.shape));
            }
            batch += p.shape[0];
            data.extend_from_slice(&p.data);
        }
        let mut shape = vec![batch];
        shape.extend_from_slice(tail);
        Self::new(shape, data)
    }

    /// The `i`-th batch item, keeping a leading axis of extent 1.
    pub fn batch_item(&self, i: usize) -> Result<Self> {
        let n = *self.shape.first().ok_or_else(|| shape_err!("rank-0 tensor has no batch axis"))?;
        if i >= n {
            return Err(Error::Index { index: i, len: n });
        }
        let per = self.numel() / n;
        let mut shape = self.shape.clone();
        shape[0] = 1;
        Self::new(shape, self.data[i * per..(i + 1) * per].to_vec())
    }

    /// Little-endian f32 bytes of the data, used for byte-level audits.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.data
            .iter()
            .flat_map(|&v| (v.as_f64() as f32).to_le_bytes())
            .collect()
    }
}
