use crate::error::{shape_err, Result};
use crate::tensor::{Real, Tensor};

/// Single-level 2-D Haar analysis of a `[B, C, R, W]` map: four
/// `[B, C, R/2, W/2]` subbands.
#[derive(Debug, Clone, PartialEq)]
pub struct DwtSubbands<F: Real> {
    /// Approximation.
    pub ll: Tensor<F>,
    /// Horizontal detail (difference between rows).
    pub lh: Tensor<F>,
    /// Vertical detail (difference between columns).
    pub hl: Tensor<F>,
    /// Diagonal detail.
    pub hh: Tensor<F>,
}

impl<F: Real> DwtSubbands<F> {
    pub fn energy(&self) -> F {
        self.ll.sum_sq() + self.lh.sum_sq() + self.hl.sum_sq() + self.hh.sum_sq()
    }
}

/// Orthonormal Haar DWT. For each 2×2 block `[[a, b], [c, d]]`:
///
/// ```text
/// ll = (a + b + c + d) / 2     lh = (a + b - c - d) / 2
/// hl = (a - b + c - d) / 2     hh = (a - b - c + d) / 2
/// ```
pub fn haar_dwt2d<F: Real>(x: &Tensor<F>) -> Result<DwtSubbands<F>> {
    let (b, c, rows, cols) = x.dims4()?;
    if rows % 2 != 0 || cols % 2 != 0 {
        return Err(shape_err!("Haar DWT needs even extents, got {rows}x{cols}"));
    }
    let (hr, hc) = (rows / 2, cols / 2);
    let half = F::from_f64(0.5);
    let mut bands: [Tensor<F>; 4] = std::array::from_fn(|_| Tensor::zeros([b, c, hr, hc]));
    for bi in 0..b {
        for ci in 0..c {
            let src = x.plane(bi, ci);
            for r in 0..hr {
                for q in 0..hc {
                    let i = 2 * r * cols + 2 * q;
                    let (p, s, t, u) = (src[i], src[i + 1], src[i + cols], src[i + cols + 1]);
                    let o = r * hc + q;
                    bands[0].plane_mut(bi, ci)[o] = (p + s + t + u) * half;
                    bands[1].plane_mut(bi, ci)[o] = (p + s - t - u) * half;
                    bands[2].plane_mut(bi, ci)[o] = (p - s + t - u) * half;
                    bands[3].plane_mut(bi, ci)[o] = (p - s - t + u) * half;
                }
            }
        }
    }
    let [ll, lh, hl, hh] = bands;
    Ok(DwtSubbands { ll, lh, hl, hh })
}

/// Inverse of [`haar_dwt2d`].
pub fn haar_idwt2d<F: Real>(s: &DwtSubbands<F>) -> Result<Tensor<F>> {
    let (b, c, hr, hc) = s.ll.dims4()?;
    for t in [&s.lh, &s.hl, &s.hh] {
        s.ll.expect_same_shape(t)?;
    }
    let cols = 2 * hc;
    let half = F::from_f64(0.5);
    let mut out = Tensor::zeros([b, c, 2 * hr, cols]);
    for bi in 0..b {
        for ci in 0..c {
            let (ll, lh, hl, hh) = (s.ll.plane(bi, ci), s.lh.plane(bi, ci), s.hl.plane(bi, ci), s.hh.plane(bi, ci));
            let dst = out.plane_mut(bi, ci);
            for r in 0..hr {
                for q in 0..hc {
                    let o = r * hc + q;
                    let i = 2 * r * cols + 2 * q;
                    dst[i] = (ll[o] + lh[o] + hl[o] + hh[o]) * half;
                    dst[i + 1] = (ll[o] + lh[o] - hl[o] - hh[o]) * half;
                    dst[i + cols] = (ll[o] - lh[o] + hl[o] - hh[o]) * half;
                    dst[i + cols + 1] = (ll[o] - lh[o] - hl[o] + hh[o]) * half;
                }
            }
        }
    }
    Ok(out)
}
