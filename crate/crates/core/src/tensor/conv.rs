use std::borrow::Cow;

use super::linalg::{gemm, Transpose};
use super::{Real, Tensor};
use crate::error::{config_err, shape_err, Result};

/// Geometry of a 2-D convolution with zero "same" padding.
///
/// With `stride == 1` the output has the input's spatial size; with larger
/// strides each extent becomes `ceil(n / stride)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub dilation: usize,
    pub groups: usize,
    pub stride: usize,
}

impl ConvSpec {
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel,
            dilation: 1,
            groups: 1,
            stride: 1,
        }
    }

    pub fn dilation(mut self, dilation: usize) -> Self {
        self.dilation = dilation;
        self
    }

    pub fn groups(mut self, groups: usize) -> Self {
        self.groups = groups;
        self
    }

    pub fn stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(config_err!("conv with zero channels: {self:?}"));
        }
        if self.kernel == 0 || self.kernel.is_multiple_of(2) {
            return Err(config_err!("kernel must be odd, got {}", self.kernel));
        }
        if self.dilation == 0 || self.stride == 0 {
            return Err(config_err!("dilation and stride must be positive: {self:?}"));
        }
        if self.groups == 0
            || !self.in_channels.is_multiple_of(self.groups)
            || !self.out_channels.is_multiple_of(self.groups)
        {
            return Err(config_err!(
                "groups={} must divide in_channels={} and out_channels={}",
                self.groups,
                self.in_channels,
                self.out_channels
            ));
        }
        Ok(())
    }

    /// `[out_channels, in_channels / groups, kernel, kernel]`
    pub fn weight_shape(&self) -> [usize; 4] {
        [
            self.out_channels,
            self.in_channels / self.groups,
            self.kernel,
            self.kernel,
        ]
    }

    pub fn fan_in(&self) -> usize {
        self.in_channels / self.groups * self.kernel * self.kernel
    }

    pub fn output_extent(&self, n: usize) -> usize {
        n.div_ceil(self.stride)
    }

    fn padding(&self) -> usize {
        self.dilation * (self.kernel - 1) / 2
    }
}

struct Geometry {
    batch: usize,
    rows: usize,
    cols: usize,
    out_rows: usize,
    out_cols: usize,
    cin_g: usize,
    cout_g: usize,
    taps: usize,
}

impl Geometry {
    fn check<F: Real>(input: &Tensor<F>, weight: &Tensor<F>, spec: &ConvSpec) -> Result<Self> {
        spec.validate()?;
        let (batch, c, rows, cols) = input.dims4()?;
        if c != spec.in_channels {
            return Err(shape_err!(
                "conv input has {c} channels, spec expects {}",
                spec.in_channels
            ));
        }
        if weight.shape() != spec.weight_shape() {
            return Err(shape_err!(
                "conv weight shape {:?}, spec expects {:?}",
                weight.shape(),
                spec.weight_shape()
            ));
        }
        Ok(Self {
            batch,
            rows,
            cols,
            out_rows: spec.output_extent(rows),
            out_cols: spec.output_extent(cols),
            cin_g: spec.in_channels / spec.groups,
            cout_g: spec.out_channels / spec.groups,
            taps: spec.kernel * spec.kernel,
        })
    }

    fn k(&self) -> usize {
        self.cin_g * self.taps
    }

    fn p(&self) -> usize {
        self.out_rows * self.out_cols
    }

    fn direct(&self, spec: &ConvSpec) -> bool {
        spec.kernel == 1 && spec.stride == 1
    }
}

// Output positions `o` whose source `o * stride + t * dilation - pad` lies in
// `[0, n)`, as a half-open range, plus the source of the first one.
#[inline]
fn valid_range(t: usize, spec: &ConvSpec, n: usize, out: usize) -> (usize, usize, isize) {
    let shift = (t * spec.dilation) as isize - spec.padding() as isize;
    let s = spec.stride as isize;
    // Smallest o with o * s + shift >= 0.
    let lo = if shift >= 0 { 0 } else { ((-shift) + s - 1) / s };
    // Largest o with o * s + shift <= n - 1.
    let last = n as isize - 1 - shift;
    let hi = if last < 0 { 0 } else { (last / s + 1).min(out as isize) };
    let lo = lo.min(hi);
    (lo as usize, hi as usize, lo * s + shift)
}

fn im2col<F: Real>(plane_group: &[F], geo: &Geometry, spec: &ConvSpec) -> Vec<F> {
    let (k, p) = (geo.k(), geo.p());
    let mut col = vec![F::zero(); k * p];
    let plane = geo.rows * geo.cols;
    let st = spec.stride;
    for ci in 0..geo.cin_g {
        let src = &plane_group[ci * plane..(ci + 1) * plane];
        for ky in 0..spec.kernel {
            let (r_lo, r_hi, r_src) = valid_range(ky, spec, geo.rows, geo.out_rows);
            for kx in 0..spec.kernel {
                let (c_lo, c_hi, c_src) = valid_range(kx, spec, geo.cols, geo.out_cols);
                let row = (ci * geo.taps) + ky * spec.kernel + kx;
                let dst = &mut col[row * p..(row + 1) * p];
                for (i, or) in (r_lo..r_hi).enumerate() {
                    let ir = r_src as usize + i * st;
                    let src_row = &src[ir * geo.cols..(ir + 1) * geo.cols];
                    let dst_row = &mut dst[or * geo.out_cols + c_lo..or * geo.out_cols + c_hi];
                    if st == 1 {
                        dst_row.copy_from_slice(&src_row[c_src as usize..c_src as usize + (c_hi - c_lo)]);
                    } else {
                        for (j, d) in dst_row.iter_mut().enumerate() {
                            *d = src_row[c_src as usize + j * st];
                        }
                    }
                }
            }
        }
    }
    col
}

fn col2im_add<F: Real>(col: &[F], grad_group: &mut [F], geo: &Geometry, spec: &ConvSpec) {
    let p = geo.p();
    let plane = geo.rows * geo.cols;
    let st = spec.stride;
    for ci in 0..geo.cin_g {
        let dst = &mut grad_group[ci * plane..(ci + 1) * plane];
        for ky in 0..spec.kernel {
            let (r_lo, r_hi, r_src) = valid_range(ky, spec, geo.rows, geo.out_rows);
            for kx in 0..spec.kernel {
                let (c_lo, c_hi, c_src) = valid_range(kx, spec, geo.cols, geo.out_cols);
                let row = (ci * geo.taps) + ky * spec.kernel + kx;
                let src = &col[row * p..(row + 1) * p];
                for (i, or) in (r_lo..r_hi).enumerate() {
                    let ir = r_src as usize + i * st;
                    let src_row = &src[or * geo.out_cols + c_lo..or * geo.out_cols + c_hi];
                    let dst_row = &mut dst[ir * geo.cols..(ir + 1) * geo.cols];
                    for (j, &g) in src_row.iter().enumerate() {
                        dst_row[c_src as usize + j * st] += g;
                    }
                }
            }
        }
    }
}

// Few output channels: accumulate shifted input rows straight into the
// output instead of materialising the column matrix.
fn use_shift_path(geo: &Geometry, spec: &ConvSpec) -> bool {
    spec.stride == 1 && spec.kernel > 1 && geo.cout_g <= 4
}

// Visit every (output row, input row, output column range, input column
// offset) overlap for tap (ky, kx) of a stride-1 convolution.
#[inline]
fn for_each_overlap(geo: &Geometry, spec: &ConvSpec, ky: usize, kx: usize, mut f: impl FnMut(usize, usize, usize, usize, usize)) {
    let (r_lo, r_hi, r_src) = valid_range(ky, spec, geo.rows, geo.out_rows);
    let (c_lo, c_hi, c_src) = valid_range(kx, spec, geo.cols, geo.out_cols);
    for (i, or) in (r_lo..r_hi).enumerate() {
        f(or, r_src as usize + i, c_lo, c_hi, c_src as usize);
    }
}

fn shift_forward<F: Real>(group_in: &[F], w: &[F], out: &mut [F], geo: &Geometry, spec: &ConvSpec) {
    let plane = geo.rows * geo.cols;
    let p = geo.p();
    let kk = spec.kernel;
    for co in 0..geo.cout_g {
        let dst = &mut out[co * p..(co + 1) * p];
        for ci in 0..geo.cin_g {
            let src = &group_in[ci * plane..(ci + 1) * plane];
            for ky in 0..kk {
                for kx in 0..kk {
                    let wv = w[(co * geo.cin_g + ci) * geo.taps + ky * kk + kx];
                    for_each_overlap(geo, spec, ky, kx, |or, ir, lo, hi, cs| {
                        let d = &mut dst[or * geo.out_cols + lo..or * geo.out_cols + hi];
                        let s = &src[ir * geo.cols + cs..ir * geo.cols + cs + (hi - lo)];
                        for (a, &b) in d.iter_mut().zip(s) {
                            *a += wv * b;
                        }
                    });
                }
            }
        }
    }
}

fn shift_backward<F: Real>(
    group_in: &[F],
    w: &[F],
    d_out: &[F],
    d_w: &mut [F],
    mut d_in: Option<&mut [F]>,
    geo: &Geometry,
    spec: &ConvSpec,
) {
    let plane = geo.rows * geo.cols;
    let p = geo.p();
    let kk = spec.kernel;
    for co in 0..geo.cout_g {
        let g = &d_out[co * p..(co + 1) * p];
        for ci in 0..geo.cin_g {
            let src = &group_in[ci * plane..(ci + 1) * plane];
            for ky in 0..kk {
                for kx in 0..kk {
                    let wi = (co * geo.cin_g + ci) * geo.taps + ky * kk + kx;
                    let mut acc = F::zero();
                    for_each_overlap(geo, spec, ky, kx, |or, ir, lo, hi, cs| {
                        let gr = &g[or * geo.out_cols + lo..or * geo.out_cols + hi];
                        let s = &src[ir * geo.cols + cs..ir * geo.cols + cs + (hi - lo)];
                        acc += gr.iter().zip(s).fold(F::zero(), |a, (&x, &y)| a + x * y);
                    });
                    d_w[wi] += acc;
                    if let Some(d_in) = d_in.as_deref_mut() {
                        let wv = w[wi];
                        let dst = &mut d_in[ci * plane..(ci + 1) * plane];
                        for_each_overlap(geo, spec, ky, kx, |or, ir, lo, hi, cs| {
                            let gr = &g[or * geo.out_cols + lo..or * geo.out_cols + hi];
                            let d = &mut dst[ir * geo.cols + cs..ir * geo.cols + cs + (hi - lo)];
                            for (a, &b) in d.iter_mut().zip(gr) {
                                *a += wv * b;
                            }
                        });
                    }
                }
            }
        }
    }
}

/// Grouped, dilated, strided 2-D convolution (cross-correlation, as in
/// every deep-learning framework) with zero same-padding.
///
/// `weight` is `[out, in / groups, k, k]`; `bias`, when given, is `[out]`.
pub fn conv2d<F: Real>(
    input: &Tensor<F>,
    weight: &Tensor<F>,
    bias: Option<&Tensor<F>>,
    spec: &ConvSpec,
) -> Result<Tensor<F>> {
    let geo = Geometry::check(input, weight, spec)?;
    if let Some(b) = bias {
        if b.shape() != [spec.out_channels] {
            return Err(shape_err!("conv bias shape {:?}", b.shape()));
        }
    }
    let (k, p) = (geo.k(), geo.p());
    let in_plane = geo.rows * geo.cols;
    let mut out = Tensor::zeros([geo.batch, spec.out_channels, geo.out_rows, geo.out_cols]);
    for b in 0..geo.batch {
        for g in 0..spec.groups {
            let start = (b * spec.in_channels + g * geo.cin_g) * in_plane;
            let group_in = &input.data()[start..start + geo.cin_g * in_plane];
            let w = &weight.data()[g * geo.cout_g * k..(g + 1) * geo.cout_g * k];
            let o_start = (b * spec.out_channels + g * geo.cout_g) * p;
            if use_shift_path(&geo, spec) {
                shift_forward(group_in, w, &mut out.data_mut()[o_start..o_start + geo.cout_g * p], &geo, spec);
                continue;
            }
            let col: Cow<[F]> = if geo.direct(spec) {
                Cow::Borrowed(group_in)
            } else {
                Cow::Owned(im2col(group_in, &geo, spec))
            };
            gemm(
                F::one(),
                w,
                (geo.cout_g, k),
                Transpose::No,
                &col,
                (k, p),
                Transpose::No,
                F::zero(),
                &mut out.data_mut()[o_start..o_start + geo.cout_g * p],
            );
        }
        if let Some(bias) = bias {
            for (c, &bv) in bias.data().iter().enumerate() {
                for v in out.plane_mut(b, c) {
                    *v += bv;
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct ConvGrads<F: Copy + std::fmt::Debug> {
    pub input: Option<Tensor<F>>,
    pub weight: Tensor<F>,
    pub bias: Tensor<F>,
}

/// Gradients of [`conv2d`] with respect to its input (optional), weight
/// and bias, given the upstream gradient of the output.
pub fn conv2d_backward<F: Real>(
    input: &Tensor<F>,
    weight: &Tensor<F>,
    grad_out: &Tensor<F>,
    spec: &ConvSpec,
    want_input: bool,
) -> Result<ConvGrads<F>> {
    let geo = Geometry::check(input, weight, spec)?;
    let expected = [geo.batch, spec.out_channels, geo.out_rows, geo.out_cols];
    if grad_out.shape() != expected {
        return Err(shape_err!(
            "conv output gradient {:?}, expected {expected:?}",
            grad_out.shape()
        ));
    }
    let (k, p) = (geo.k(), geo.p());
    let in_plane = geo.rows * geo.cols;
    let mut d_weight = Tensor::zeros(spec.weight_shape());
    let mut d_bias = Tensor::zeros([spec.out_channels]);
    let mut d_input = want_input.then(|| Tensor::zeros(input.shape().to_vec()));

    for b in 0..geo.batch {
        for c in 0..spec.out_channels {
            d_bias.data_mut()[c] += grad_out.plane(b, c).iter().copied().sum();
        }
        for g in 0..spec.groups {
            let start = (b * spec.in_channels + g * geo.cin_g) * in_plane;
            let group_in = &input.data()[start..start + geo.cin_g * in_plane];
            if use_shift_path(&geo, spec) {
                let o_start = (b * spec.out_channels + g * geo.cout_g) * p;
                shift_backward(
                    group_in,
                    &weight.data()[g * geo.cout_g * k..(g + 1) * geo.cout_g * k],
                    &grad_out.data()[o_start..o_start + geo.cout_g * p],
                    &mut d_weight.data_mut()[g * geo.cout_g * k..(g + 1) * geo.cout_g * k],
                    d_input
                        .as_mut()
                        .map(|d| &mut d.data_mut()[start..start + geo.cin_g * in_plane]),
                    &geo,
                    spec,
                );
                continue;
            }
            let col: Cow<[F]> = if geo.direct(spec) {
                Cow::Borrowed(group_in)
            } else {
                Cow::Owned(im2col(group_in, &geo, spec))
            };
            let o_start = (b * spec.out_channels + g * geo.cout_g) * p;
            let d_out = &grad_out.data()[o_start..o_start + geo.cout_g * p];
            gemm(
                F::one(),
                d_out,
                (geo.cout_g, p),
                Transpose::No,
                &col,
                (k, p),
                Transpose::Yes,
                F::one(),
                &mut d_weight.data_mut()[g * geo.cout_g * k..(g + 1) * geo.cout_g * k],
            );
            if let Some(d_input) = d_input.as_mut() {
                let w = &weight.data()[g * geo.cout_g * k..(g + 1) * geo.cout_g * k];
                let dst = &mut d_input.data_mut()[start..start + geo.cin_g * in_plane];
                if geo.direct(spec) {
                    gemm(
                        F::one(),
                        w,
                        (geo.cout_g, k),
                        Transpose::Yes,
                        d_out,
                        (geo.cout_g, p),
                        Transpose::No,
                        F::one(),
                        dst,
                    );
                } else {
                    let mut d_col = vec![F::zero(); k * p];
                    gemm(
                        F::one(),
                        w,
                        (geo.cout_g, k),
                        Transpose::Yes,
                        d_out,
                        (geo.cout_g, p),
                        Transpose::No,
                        F::zero(),
                        &mut d_col,
                    );
                    col2im_add(&d_col, dst, &geo, spec);
                }
            }
        }
    }
    Ok(ConvGrads {
        input: d_input,
        weight: d_weight,
        bias: d_bias,
    })
}
