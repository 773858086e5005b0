use ndarray::linalg::general_mat_mul;
use ndarray::{ArrayView2, ArrayViewMut2};

use super::{Real, Tensor};
use crate::error::{shape_err, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transpose {
    No,
    Yes,
}

/// `c = alpha * op(a) * op(b) + beta * c` on row-major slices.
///
/// `a_dims` / `b_dims` are the stored (untransposed) extents. The product is
/// dispatched to a blocked GEMM kernel.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm<F: Real>(
    alpha: F,
    a: &[F],
    a_dims: (usize, usize),
    ta: Transpose,
    b: &[F],
    b_dims: (usize, usize),
    tb: Transpose,
    beta: F,
    c: &mut [F],
) {
    let a = ArrayView2::from_shape(a_dims, a).expect("gemm: lhs extent");
    let b = ArrayView2::from_shape(b_dims, b).expect("gemm: rhs extent");
    let a = if ta == Transpose::Yes { a.reversed_axes() } else { a };
    let b = if tb == Transpose::Yes { b.reversed_axes() } else { b };
    let (m, n) = (a.nrows(), b.ncols());
    let mut c = ArrayViewMut2::from_shape((m, n), c).expect("gemm: output extent");
    general_mat_mul(alpha, &a, &b, beta, &mut c);
}

/// Matrix product of `[m, k]` and `[k, n]` tensors.
pub fn matmul<F: Real>(a: &Tensor<F>, b: &Tensor<F>) -> Result<Tensor<F>> {
    matmul_into(a, Transpose::No, b, Transpose::No)
}

/// Matrix product with optional transposition of either operand.
pub fn matmul_into<F: Real>(
    a: &Tensor<F>,
    ta: Transpose,
    b: &Tensor<F>,
    tb: Transpose,
) -> Result<Tensor<F>> {
    let (ar, ac) = a.dims2()?;
    let (br, bc) = b.dims2()?;
    let (m, ka) = if ta == Transpose::Yes { (ac, ar) } else { (ar, ac) };
    let (kb, n) = if tb == Transpose::Yes { (bc, br) } else { (br, bc) };
    if ka != kb {
        return Err(shape_err!(
            "matmul inner extents disagree: {:?} x {:?}",
            a.shape(),
            b.shape()
        ));
    }
    let mut out = Tensor::zeros([m, n]);
    gemm(
        F::one(),
        a.data(),
        (ar, ac),
        ta,
        b.data(),
        (br, bc),
        tb,
        F::zero(),
        out.data_mut(),
    );
    Ok(out)
}
