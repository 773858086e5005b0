use crate::error::{config_err, shape_err, Result};
use crate::tensor::{Real, Tensor};

#[derive(Debug, Clone)]
pub struct LossOutput<F: Real> {
    pub loss: F,
    pub bce: F,
    pub iou: F,
    /// `dL / d logits`.
    pub grad: Tensor<F>,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Mean binary cross-entropy plus `1 - soft IoU` (with +1 smoothing),
/// computed per sample and averaged over the batch.
///
/// Accumulation is in `f64` regardless of `F`.
pub fn bce_iou_loss<F: Real>(logits: &Tensor<F>, gt: &Tensor<F>) -> Result<LossOutput<F>> {
    if logits.shape() != gt.shape() {
        return Err(shape_err!("logits {:?} vs mask {:?}", logits.shape(), gt.shape()));
    }
    if logits.rank() == 0 || logits.numel() == 0 {
        return Err(shape_err!("empty loss input"));
    }
    if let Some(bad) = gt.data().iter().find(|v| !(F::zero()..=F::one()).contains(*v)) {
        return Err(config_err!("mask value {bad} outside [0, 1]"));
    }
    logits.ensure_finite("logits")?;
    let batch = logits.shape()[0];
    let n = logits.numel() / batch;
    let mut grad = Vec::with_capacity(logits.numel());
    let (mut total_bce, mut total_iou) = (0.0, 0.0);
    for (z, g) in logits.data().chunks_exact(n).zip(gt.data().chunks_exact(n)) {
        let mut bce = 0.0;
        let (mut inter, mut sum_p, mut sum_g) = (0.0, 0.0, 0.0);
        let probs: Vec<f64> = z.iter().map(|v| sigmoid(v.as_f64())).collect();
        for ((&zi, &gi), &p) in z.iter().zip(g).zip(&probs) {
            let (zi, gi) = (zi.as_f64(), gi.as_f64());
            bce += zi.max(0.0) - zi * gi + (-zi.abs()).exp().ln_1p();
            inter += p * gi;
            sum_p += p;
            sum_g += gi;
        }
        let union = sum_p + sum_g - inter;
        let iou = (inter + 1.0) / (union + 1.0);
        total_bce += bce / n as f64;
        total_iou += iou;
        let u1 = union + 1.0;
        for (&p, &gi) in probs.iter().zip(g) {
            let gi = gi.as_f64();
            let d_iou_dp = (gi * u1 - (inter + 1.0) * (1.0 - gi)) / (u1 * u1);
            let dz = (p - gi) / n as f64 - d_iou_dp * p * (1.0 - p);
            grad.push(F::from_f64(dz / batch as f64));
        }
    }
    let (bce, iou) = (total_bce / batch as f64, total_iou / batch as f64);
    Ok(LossOutput {
        loss: F::from_f64(bce + 1.0 - iou),
        bce: F::from_f64(bce),
        iou: F::from_f64(iou),
        grad: Tensor::new(logits.shape().to_vec(), grad)?,
    })
}
