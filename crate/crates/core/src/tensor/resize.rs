use super::{Real, Tensor};
use crate::error::{config_err, Result};

// One output coordinate's two source taps and the weight of the upper one,
// using the half-pixel (align_corners = false) convention.
#[derive(Clone, Copy)]
struct Tap {
    lo: usize,
    hi: usize,
    frac: f64,
}

fn taps(src: usize, dst: usize) -> Vec<Tap> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|o| {
            let pos = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
            let lo = (pos.floor() as usize).min(src - 1);
            let hi = if lo + 1 < src { lo + 1 } else { lo };
            Tap {
                lo,
                hi,
                frac: pos - lo as f64,
            }
        })
        .collect()
}

/// Bilinear resampling of every plane to `(rows, cols)`.
///
/// Source coordinates follow the half-pixel convention
/// `src = (dst + 0.5) * in / out - 0.5`, clamped below at 0, which is the
/// `align_corners = false` behaviour of common frameworks.
pub fn resize_bilinear<F: Real>(input: &Tensor<F>, target: (usize, usize)) -> Result<Tensor<F>> {
    let (b, c, rows, cols) = input.dims4()?;
    let (out_r, out_c) = target;
    if out_r == 0 || out_c == 0 {
        return Err(config_err!("resize target must be positive, got {target:?}"));
    }
    if (out_r, out_c) == (rows, cols) {
        return Ok(input.clone());
    }
    let (tr, tc) = (taps(rows, out_r), taps(cols, out_c));
    let mut out = Tensor::zeros([b, c, out_r, out_c]);
    for bi in 0..b {
        for ci in 0..c {
            let src = input.plane(bi, ci);
            let dst = out.plane_mut(bi, ci);
            for (o_r, ty) in tr.iter().enumerate() {
                let fy = F::from_f64(ty.frac);
                let row_lo = &src[ty.lo * cols..(ty.lo + 1) * cols];
                let row_hi = &src[ty.hi * cols..(ty.hi + 1) * cols];
                for (o_c, tx) in tc.iter().enumerate() {
                    let fx = F::from_f64(tx.frac);
                    let top = row_lo[tx.lo] + (row_lo[tx.hi] - row_lo[tx.lo]) * fx;
                    let bot = row_hi[tx.lo] + (row_hi[tx.hi] - row_hi[tx.lo]) * fx;
                    dst[o_r * out_c + o_c] = top + (bot - top) * fy;
                }
            }
        }
    }
    Ok(out)
}

/// Adjoint of [`resize_bilinear`]: scatters the output gradient back onto
/// the `(rows, cols)` source grid.
pub fn resize_bilinear_backward<F: Real>(
    grad_out: &Tensor<F>,
    source: (usize, usize),
) -> Result<Tensor<F>> {
    let (b, c, out_r, out_c) = grad_out.dims4()?;
    let (rows, cols) = source;
    if rows == 0 || cols == 0 {
        return Err(config_err!("resize source must be positive, got {source:?}"));
    }
    if (out_r, out_c) == (rows, cols) {
        return Ok(grad_out.clone());
    }
    let (tr, tc) = (taps(rows, out_r), taps(cols, out_c));
    let mut out = Tensor::zeros([b, c, rows, cols]);
    for bi in 0..b {
        for ci in 0..c {
            let g = grad_out.plane(bi, ci);
            let dst = out.plane_mut(bi, ci);
            for (o_r, ty) in tr.iter().enumerate() {
                let fy = F::from_f64(ty.frac);
                for (o_c, tx) in tc.iter().enumerate() {
                    let fx = F::from_f64(tx.frac);
                    let v = g[o_r * out_c + o_c];
                    let (top, bot) = (v * (F::one() - fy), v * fy);
                    dst[ty.lo * cols + tx.lo] += top * (F::one() - fx);
                    dst[ty.lo * cols + tx.hi] += top * fx;
                    dst[ty.hi * cols + tx.lo] += bot * (F::one() - fx);
                    dst[ty.hi * cols + tx.hi] += bot * fx;
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Prng;

    #[test]
    fn identity_and_constant() {
        let mut rng = Prng::new(2);
        let x = Tensor::<f32>::new([1, 2, 3, 5], (0..30).map(|_| rng.next_f64() as f32).collect()).unwrap();
        assert_eq!(resize_bilinear(&x, (3, 5)).unwrap(), x);
        let k = Tensor::<f32>::full([1, 1, 3, 3], 0.7);
        for target in [(1, 1), (7, 2), (12, 12)] {
            let y = resize_bilinear(&k, target).unwrap();
            assert!(y.data().iter().all(|&v| (v - 0.7).abs() < 1e-7));
        }
    }

    #[test]
    fn two_by_two_to_four_by_four() {
        // f(r, c) = 2r + c on the source grid, so any interior sample equals
        // 2 * src_r + c_src exactly; half-pixel mapping gives src = 0.25 / 0.75
        // for the two central output rows/cols.
        let x = Tensor::<f64>::from_f64([1, 1, 2, 2], &[0.0, 1.0, 2.0, 3.0]).unwrap();
        let y = resize_bilinear(&x, (4, 4)).unwrap();
        let src = [0.0, 0.25, 0.75, 1.0];
        for r in 0..4 {
            for c in 0..4 {
                let want = 2.0 * src[r] + src[c];
                assert!((y.at4(0, 0, r, c) - want).abs() < 1e-12, "({r},{c})");
            }
        }
        assert_eq!(y.at4(0, 0, 1, 1), 0.75);
        assert_eq!(y.at4(0, 0, 2, 2), 2.25);
    }

    #[test]
    fn backward_is_adjoint() {
        let mut rng = Prng::new(4);
        for (src, dst) in [((3, 5), (8, 7)), ((8, 8), (3, 4)), ((2, 2), (4, 4))] {
            let x = Tensor::<f64>::new([2, 2, src.0, src.1], (0..4 * src.0 * src.1).map(|_| rng.normal()).collect()).unwrap();
            let y = resize_bilinear(&x, dst).unwrap();
            let g = Tensor::new(y.shape().to_vec(), (0..y.numel()).map(|_| rng.normal()).collect()).unwrap();
            let gx = resize_bilinear_backward(&g, src).unwrap();
            let lhs: f64 = y.data().iter().zip(g.data()).map(|(a, b)| a * b).sum();
            let rhs: f64 = x.data().iter().zip(gx.data()).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_target_rejected() {
        let x = Tensor::<f32>::zeros([1, 1, 2, 2]);
        assert!(resize_bilinear(&x, (0, 2)).is_err());
    }
}
