use super::{Real, Tensor};
use crate::error::{config_err, shape_err, Result};

pub const DEFAULT_EPS: f64 = 1e-5;

/// Normalise every `(sample, channel)` plane to zero mean and unit
/// (population) variance using statistics of the input itself, then apply
/// the per-channel affine `gamma * x + beta`.
///
/// This is also how the frozen, never-trained batch-norm layers behave:
/// with no running averages to fall back on, they see instance statistics.
pub fn instance_norm<F: Real>(
    input: &Tensor<F>,
    gamma: &Tensor<F>,
    beta: &Tensor<F>,
    eps: F,
) -> Result<Tensor<F>> {
    if eps <= F::zero() {
        return Err(config_err!("normalisation eps must be positive"));
    }
    let (b, c, _, _) = input.dims4()?;
    if gamma.shape() != [c] || beta.shape() != [c] {
        return Err(shape_err!(
            "affine params {:?}/{:?} for {c} channels",
            gamma.shape(),
            beta.shape()
        ));
    }
    let mut out = input.clone();
    for bi in 0..b {
        for ci in 0..c {
            let plane = out.plane_mut(bi, ci);
            let n = F::from_f64(plane.len() as f64);
            let mean = plane.iter().copied().sum::<F>() / n;
            let var = plane.iter().map(|&v| (v - mean) * (v - mean)).sum::<F>() / n;
            let inv = (var + eps).sqrt().recip();
            let (g, be) = (gamma.data()[ci], beta.data()[ci]);
            for v in plane.iter_mut() {
                *v = (*v - mean) * inv * g + be;
            }
        }
    }
    Ok(out)
}

/// Parameter-free layer normalisation of one vector.
pub fn layer_norm<F: Real>(x: &[F], eps: F) -> Vec<F> {
    let n = F::from_f64(x.len() as f64);
    let mean = x.iter().copied().sum::<F>() / n;
    let var = x.iter().map(|&v| (v - mean) * (v - mean)).sum::<F>() / n;
    let inv = (var + eps).sqrt().recip();
    x.iter().map(|&v| (v - mean) * inv).collect()
}

/// Vector-Jacobian product of [`layer_norm`].
pub fn layer_norm_backward<F: Real>(x: &[F], dy: &[F], eps: F) -> Vec<F> {
    let n = F::from_f64(x.len() as f64);
    let mean = x.iter().copied().sum::<F>() / n;
    let var = x.iter().map(|&v| (v - mean) * (v - mean)).sum::<F>() / n;
    let inv = (var + eps).sqrt().recip();
    let xhat: Vec<F> = x.iter().map(|&v| (v - mean) * inv).collect();
    let mean_dy = dy.iter().copied().sum::<F>() / n;
    let mean_dy_xhat = dy.iter().zip(&xhat).map(|(&d, &h)| d * h).sum::<F>() / n;
    xhat.iter()
        .zip(dy)
        .map(|(&h, &d)| inv * (d - mean_dy - h * mean_dy_xhat))
        .collect()
}
